"""Variational f-divergence estimation.

For a divergence kind with conjugate ``f*`` and output activation ``g_f``,
a critic with raw output ``V`` gives the lower bound

    E_p[g_f(V(x))] - E_q[f*(g_f(V(x)))]

which is the distribution metric used by every training stage.

=================  ======================  ======================
kind               g_f(v)                  f*(t)
=================  ======================  ======================
GAN                -log(1 + exp(-v))       -log(1 - exp(t)), t < 0
JensenShannonGAN   -log(1 + exp(-v))       -log(2 - exp(t)), t < log 2
KL                 v                       exp(t - 1)
PearsonChiSq       v                       t**2 / 4 + t
=================  ======================  ======================
"""

from __future__ import annotations

import enum
import math

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DomainError

LOG2 = math.log(2.0)


class DivergenceKind(enum.Enum):
    GAN = "gan"
    JensenShannonGAN = "js"
    KL = "kl"
    PearsonChiSq = "pearson"

    @classmethod
    def parse(cls, name: str) -> "DivergenceKind":
        key = name.strip().lower()
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown divergence kind {name!r}")


def conjugate(kind: DivergenceKind, t):
    """Fenchel conjugate f*(t); accepts scalars or arrays."""
    t_arr = np.asarray(t, dtype=np.float64)
    if kind is DivergenceKind.KL:
        out = np.exp(t_arr - 1.0)
    elif kind is DivergenceKind.PearsonChiSq:
        out = 0.25 * t_arr * t_arr + t_arr
    elif kind is DivergenceKind.GAN:
        if np.any(t_arr >= 0.0):
            raise DomainError(f"GAN conjugate needs t < 0, got max {t_arr.max()}")
        out = -np.log(-np.expm1(t_arr))
    else:
        if np.any(t_arr >= LOG2):
            raise DomainError(f"JensenShannonGAN conjugate needs t < log 2, got max {t_arr.max()}")
        out = -np.log(2.0 - np.exp(t_arr))
    return float(out) if np.ndim(t) == 0 else out


def output_activation(kind: DivergenceKind, v):
    v_arr = np.asarray(v, dtype=np.float64)
    if kind in (DivergenceKind.GAN, DivergenceKind.JensenShannonGAN):
        out = -np.logaddexp(0.0, -v_arr)
    else:
        out = v_arr
    return float(out) if np.ndim(v) == 0 else out


def conjugate_of_activation(kind: DivergenceKind, v):
    """f*(g_f(v)) in closed form, stable for any real ``v``."""
    v_arr = np.asarray(v, dtype=np.float64)
    if kind is DivergenceKind.GAN:
        out = np.logaddexp(0.0, v_arr)
    elif kind is DivergenceKind.JensenShannonGAN:
        # 2 - sigmoid(v) lies in (1, 2), so the log is always safe
        out = -np.log(2.0 - 0.5 * (1.0 + np.tanh(0.5 * v_arr)))
    else:
        out = conjugate(kind, output_activation(kind, v_arr))
    return float(out) if np.ndim(v) == 0 else out


def variational_bound(kind: DivergenceKind, scores_p, scores_q) -> float:
    """Plain-float bound from raw critic scores on samples of p and q."""
    p = np.asarray(scores_p, dtype=np.float64).reshape(-1)
    q = np.asarray(scores_q, dtype=np.float64).reshape(-1)
    if p.size == 0 or q.size == 0:
        raise ContractError("variational_bound needs non-empty score sequences")
    return float(np.mean(output_activation(kind, p)) - np.mean(conjugate_of_activation(kind, q)))


# ---------------------------------------------------------- tape versions


def activation_t(kind: DivergenceKind, v: ad.Tensor) -> ad.Tensor:
    if kind in (DivergenceKind.GAN, DivergenceKind.JensenShannonGAN):
        return ad.negate(ad.softplus(ad.negate(v)))
    return v


def conjugate_of_activation_t(kind: DivergenceKind, v: ad.Tensor) -> ad.Tensor:
    if kind is DivergenceKind.GAN:
        return ad.softplus(v)
    if kind is DivergenceKind.JensenShannonGAN:
        return ad.negate(ad.log(ad.subtract(2.0, ad.sigmoid(v))))
    if kind is DivergenceKind.KL:
        return ad.exp(ad.subtract(v, 1.0))
    return ad.add(ad.multiply(ad.square(v), 0.25), v)


def variational_bound_t(kind: DivergenceKind, scores_p: ad.Tensor, scores_q: ad.Tensor) -> ad.Tensor:
    if scores_p.value.size == 0 or scores_q.value.size == 0:
        raise ContractError("variational_bound needs non-empty score sequences")
    return ad.subtract(ad.mean(activation_t(kind, scores_p)),
                       ad.mean(conjugate_of_activation_t(kind, scores_q)))
