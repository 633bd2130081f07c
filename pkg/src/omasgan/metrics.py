"""Detection metrics.  Anomalies are the positive class; higher score means more anomalous."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError

log = logging.getLogger(__name__)


def _prep(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if s.size != y.size:
        raise ContractError(f"{s.size} scores but {y.size} labels")
    return s, y


def auroc(scores, labels) -> float:
    """Mann-Whitney estimate of P(anomaly score > normal score), ties counting one half."""
    s, y = _prep(scores, labels)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("auroc needs both anomalies and normals")
    ranks = rankdata(s)  # average ranks; all values are exact multiples of 0.5
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (delta recall) * precision."""
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ContractError("auprc needs at least one anomaly")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores = one threshold
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


@dataclass(frozen=True)
class ThresholdMetrics:
    f1: float
    precision: float
    recall: float
    accuracy: float
    precision_undefined: bool = False


def threshold_metrics(scores, labels, tau: float) -> ThresholdMetrics:
    """Confusion-matrix rates with ``score >= tau`` predicted anomalous."""
    if not np.isfinite(tau):
        raise ContractError("threshold must be finite")
    s, y = _prep(scores, labels)
    pred = s >= tau
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    tn = int(np.sum(~pred & ~y))
    undefined = tp + fp == 0
    precision = 0.0 if undefined else tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    accuracy = (tp + tn) / s.size if s.size else 0.0
    return ThresholdMetrics(f1, precision, recall, accuracy, undefined)


@dataclass
class Histogram:
    edges: np.ndarray
    normal: np.ndarray
    anomaly: np.ndarray
    clipped: int = 0

    @property
    def counts(self) -> np.ndarray:
        return self.normal + self.anomaly


def score_histogram(scores, labels=None, bins: int = 20, range=None) -> Histogram:  # noqa: A002
    """Per-class counts; bins are [lo, hi) except the last, which is closed.

    Scores outside ``range`` are clipped into the edge bins.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.zeros(s.size, bool) if labels is None else np.asarray(labels).reshape(-1).astype(bool)
    if bins < 1:
        raise ContractError("need at least one bin")
    lo, hi = (float(s.min()), float(s.max())) if range is None else map(float, range)
    if not hi > lo:
        if range is not None or s.size == 0:
            raise ContractError(f"empty histogram range [{lo}, {hi}]")
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    clipped = int(np.sum((s < lo) | (s > hi)))
    if clipped:
        log.info("score_histogram: %d scores clipped into edge bins", clipped)
    idx = np.clip(np.floor((np.clip(s, lo, hi) - lo) / (hi - lo) * bins).astype(int), 0, bins - 1)
    normal = np.bincount(idx[~y], minlength=bins)
    anomaly = np.bincount(idx[y], minlength=bins)
    return Histogram(edges, normal, anomaly, clipped)


def mode_coverage(samples, centers, sigma: float, min_frac: float = 0.02) -> int:
    """Number of centres whose 3-sigma ball holds at least ``min_frac`` of the samples.

    Each sample is credited to its nearest centre only.
    """
    x = np.asarray(samples, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if c.shape[0] == 0:
        raise ContractError("mode_coverage needs at least one centre")
    if x.shape[0] == 0:
        return 0
    d = np.linalg.norm(x[:, None, :] - c[None, :, :], axis=2)
    nearest = d.argmin(axis=1)
    inside = d[np.arange(x.shape[0]), nearest] <= 3.0 * sigma
    counts = np.bincount(nearest[inside], minlength=c.shape[0])
    return int(np.sum(counts / x.shape[0] >= min_frac))


@dataclass
class MetricsReport:
    auroc: float
    auprc: float
    f1: float
    precision: float
    recall: float
    accuracy: float
    threshold: float
    histogram: Histogram = field(repr=False)

    def scalars(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "histogram"}

    def to_dict(self) -> dict:
        h = self.histogram
        out = self.scalars()
        out["histogram"] = {"edges": h.edges.tolist(), "normal": h.normal.tolist(),
                            "anomaly": h.anomaly.tolist(), "clipped": h.clipped}
        return out

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "value"])
            for k, v in self.scalars().items():
                w.writerow([k, repr(float(v))])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def evaluate_scores(scores, labels, tau: float, bins: int = 20) -> MetricsReport:
    s, y = _prep(scores, labels)
    t = threshold_metrics(s, y, tau)
    return MetricsReport(auroc(s, y), auprc(s, y), t.f1, t.precision, t.recall, t.accuracy,
                         float(tau), score_histogram(s, y, bins))
