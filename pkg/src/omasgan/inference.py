"""Anomaly scoring: ``AS(x) = J(x) + lam * fD(x)`` and the threshold rule.

``fD(x)`` is read off a trained critic at the single point ``x``: the
negated output activation of its raw score, so low belief in "normal" gives
a large value.  It is min-max normalised over the normal-only validation set
so that it lives on the same scale as J's sigmoid output.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .divergence import DivergenceKind, output_activation
from .errors import ConfigError, ContractError, ShapeError
from .nets import ParamSet, evaluate


class ScoreMode(enum.Enum):
    Full = "full"
    Task3Only = "task3"
    Task1Only = "task1"

    @classmethod
    def parse(cls, name: str) -> "ScoreMode":
        for mode in cls:
            if name.lower() in (mode.value, mode.name.lower()):
                return mode
        raise ValueError(f"unknown score mode {name!r}")


@dataclass(frozen=True)
class AnomalyVerdict:
    score: float
    threshold: float
    is_anomaly: bool


def classify(score: float, tau: float) -> AnomalyVerdict:
    """Normal only when strictly below the threshold."""
    return AnomalyVerdict(float(score), float(tau), bool(score >= tau))


def _check_points(critic: ParamSet, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != critic.spec.in_dim:
        raise ShapeError("score", [x.shape, (None, critic.spec.in_dim)], "point dimension mismatch")
    return x


def fdiv_point_score(critic: ParamSet, x_star, kind: DivergenceKind) -> np.ndarray:
    """``-g_f(V(x*))`` for each row of ``x_star``; larger means more anomalous."""
    x = _check_points(critic, x_star)
    return -output_activation(kind, evaluate(critic, x)[:, 0])


def j_probability(j: ParamSet, x) -> np.ndarray:
    v = evaluate(j, _check_points(j, x))[:, 0]
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def anomaly_score(j_value, fdiv_value, lam: float):
    if lam < 0:
        raise ContractError("lam must be non-negative")
    return np.asarray(j_value) + lam * np.asarray(fdiv_value)


@dataclass(frozen=True)
class MinMax:
    lo: float
    hi: float

    @classmethod
    def fit(cls, values) -> "MinMax":
        v = np.asarray(values, dtype=np.float64)
        lo, hi = float(v.min()), float(v.max())
        return cls(lo, hi if hi > lo else lo + 1.0)

    def __call__(self, v):
        return (np.asarray(v) - self.lo) / (self.hi - self.lo)


@dataclass
class Scorer:
    """Frozen networks plus validation statistics; scoring is a pure function of these."""

    lam: float = 1.0
    j: ParamSet | None = None
    c: ParamSet | None = None
    d: ParamSet | None = None
    d_kind: DivergenceKind = DivergenceKind.GAN
    c_norm: MinMax | None = None
    d_norm: MinMax | None = None

    # C is trained with log losses, i.e. the GAN conjugate pair
    c_kind = DivergenceKind.GAN

    def fit(self, val) -> "Scorer":
        val = np.asarray(val, dtype=np.float64)
        if self.c is not None:
            self.c_norm = MinMax.fit(fdiv_point_score(self.c, val, self.c_kind))
        if self.d is not None:
            self.d_norm = MinMax.fit(fdiv_point_score(self.d, val, self.d_kind))
        return self

    def _fdiv(self, critic, kind, norm, x):
        raw = fdiv_point_score(critic, x, kind)
        return raw if norm is None else norm(raw)

    def score(self, x, mode: ScoreMode = ScoreMode.Full) -> np.ndarray:
        if mode is ScoreMode.Task1Only:
            if self.d is None:
                raise ConfigError("mode", "task1 scoring needs the task1 critic checkpoint")
            return self._fdiv(self.d, self.d_kind, self.d_norm, x)
        if self.c is None:
            raise ConfigError("mode", f"{mode.value} scoring needs the task3 critic checkpoint")
        fd = self._fdiv(self.c, self.c_kind, self.c_norm, x)
        if mode is ScoreMode.Task3Only:
            return fd
        if self.j is None:
            raise ConfigError("mode", "full scoring needs the J checkpoint")
        return anomaly_score(j_probability(self.j, x), fd, self.lam)

    def threshold(self, val, mode: ScoreMode = ScoreMode.Full, quantile: float = 0.95) -> float:
        return float(np.quantile(self.score(val, mode), quantile))


def write_scores(path, scores, labels=None, tau: float | None = None) -> Path:
    """CSV with columns ``index,score[,label][,verdict]``."""
    path = Path(path)
    header = ["index", "score"]
    if labels is not None:
        header.append("label")
    if tau is not None:
        header.append("verdict")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, s in enumerate(np.asarray(scores, dtype=np.float64)):
            row = [i, repr(float(s))]
            if labels is not None:
                row.append(int(labels[i]))
            if tau is not None:
                row.append("abnormal" if classify(s, tau).is_anomaly else "normal")
            w.writerow(row)
    return path


def read_scores(path):
    """Inverse of :func:`write_scores`; returns ``(scores, labels or None)``."""
    scores, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        has_label = "label" in (reader.fieldnames or [])
        for row in reader:
            scores.append(float(row["score"]))
            if has_label:
                labels.append(int(row["label"]))
    return np.asarray(scores), (np.asarray(labels) if has_label else None)
