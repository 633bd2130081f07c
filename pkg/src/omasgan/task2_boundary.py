"""Stage 2: the boundary generator B.

B is trained on

    -m(B(z), G(z)) + mu * d(B(z), G(z)) + nu * s(B(z), z)

where ``m`` is the variational divergence estimated by an auxiliary critic,
``d`` is the mean distance from each B sample to its nearest generator
sample in an inference pool of size Q, and ``s`` is the scattering measure
(mean ratio of latent distance to output distance) that keeps B from
collapsing.  G is frozen throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import make_rng
from .divergence import DivergenceKind, variational_bound_t
from .errors import ContractError, NumericOverflowError, TrainingDivergedError
from .nets import ParamSet, evaluate, forward, init
from .optim import Adam
from .task1_gan import Task1Output, gan_d_loss, sample_latent

log = logging.getLogger(__name__)

SCATTER_EPS = 1e-8
SEED_B, SEED_LOOP = 21, 23


@dataclass
class BoundaryOutput:
    b: ParamSet
    critic: ParamSet
    trace: list = field(default_factory=list)  # (epoch, metric, distance, scatter)


# ------------------------------------------------------- plain-array versions


def pointset_distance(point, refs) -> float:
    """Smallest Euclidean distance from ``point`` to any row of ``refs``."""
    refs = np.asarray(refs, dtype=np.float64)
    if refs.ndim != 2 or refs.shape[0] == 0:
        raise ContractError("pointset_distance needs a non-empty reference set")
    diff = refs - np.asarray(point, dtype=np.float64)[None, :]
    return float(np.sqrt(np.min(np.sum(diff * diff, axis=1))))


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=2)


def chamfer_distance(set_a, set_b) -> float:
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ContractError("chamfer_distance needs two non-empty sets")
    d = np.sqrt(_pairwise_sq(a, b))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def scattering(z_batch, b_batch, i: int) -> float:
    """``1/(N-1) * sum_{j != i} |z_i - z_j| / |B(z_i) - B(z_j)|``."""
    z = np.asarray(z_batch, dtype=np.float64)
    b = np.asarray(b_batch, dtype=np.float64)
    n = z.shape[0]
    if n < 2 or b.shape[0] != n:
        raise ContractError("scattering needs N >= 2 paired latent/output rows")
    others = np.arange(n) != i
    num = np.linalg.norm(z[others] - z[i], axis=1)
    den = np.linalg.norm(b[others] - b[i], axis=1)
    if np.any(den < SCATTER_EPS):
        log.warning("scattering: %d coincident boundary samples", int(np.sum(den < SCATTER_EPS)))
        den = np.maximum(den, SCATTER_EPS)
    return float(np.mean(num / den))


# --------------------------------------------------------------- tape terms


def pointset_distance_t(b_out: ad.Tensor, refs: np.ndarray) -> ad.Tensor:
    """Per-row nearest-reference distance for an ``N x k`` tensor (shape ``N``)."""
    if refs.shape[0] == 0:
        raise ContractError("pointset_distance needs a non-empty reference set")
    n, k = b_out.shape
    diff = ad.subtract(ad.reshape(b_out, (n, 1, k)), refs[None, :, :])
    sq = ad.min(ad.sum(ad.square(diff), axis=2), axis=1)
    return ad.sqrt(ad.maximum(sq, SCATTER_EPS ** 2))


def chamfer_distance_t(b_out: ad.Tensor, refs: np.ndarray) -> ad.Tensor:
    n, k = b_out.shape
    diff = ad.subtract(ad.reshape(b_out, (n, 1, k)), refs[None, :, :])
    dist = ad.sqrt(ad.maximum(ad.sum(ad.square(diff), axis=2), SCATTER_EPS ** 2))
    return ad.add(ad.mean(ad.min(dist, axis=1)), ad.mean(ad.min(dist, axis=0)))


def scattering_t(z: np.ndarray, b_out: ad.Tensor) -> ad.Tensor:
    """Scattering term for every row, shape ``N``."""
    n, k = b_out.shape
    diff = ad.subtract(ad.reshape(b_out, (n, 1, k)), ad.reshape(b_out, (1, n, k)))
    sq = ad.sum(ad.square(diff), axis=2)
    off_diag = ~np.eye(n, dtype=bool)
    if np.any(sq.value[off_diag] < SCATTER_EPS ** 2):
        log.warning("scattering: coincident boundary samples in batch")
    den = ad.sqrt(ad.maximum(sq, SCATTER_EPS ** 2))
    num = np.sqrt(_pairwise_sq(z, z))
    ratio = ad.divide(num, den)
    return ad.multiply(ad.sum(ratio, axis=1), 1.0 / (n - 1))


def boundary_loss(kind: DivergenceKind, critic, b_out: ad.Tensor, g_batch: np.ndarray,
                  z: np.ndarray, mu: float, nu: float, refs: np.ndarray | None = None,
                  distance: str = "pointset"):
    """Return ``(loss, (metric, distance, scatter))`` for one boundary step.

    ``critic`` is a :class:`ParamSet` (held fixed) or a flat Tensor; ``refs``
    is the inference pool for the distance term and defaults to ``g_batch``.
    """
    if b_out.shape[0] == 0 or len(g_batch) == 0:
        raise ContractError("boundary_loss needs non-empty batches")
    if mu < 0 or nu < 0:
        raise ContractError("mu and nu must be non-negative")
    spec = critic.spec if isinstance(critic, ParamSet) else None
    if spec is None:
        raise ContractError("boundary_loss critic must be a ParamSet")
    refs = g_batch if refs is None else refs
    metric = variational_bound_t(kind, forward(spec, critic, b_out), forward(spec, critic, g_batch))
    if distance == "chamfer":
        dist = chamfer_distance_t(b_out, refs)
    else:
        dist = ad.mean(pointset_distance_t(b_out, refs))
    scat = ad.mean(scattering_t(z, b_out))
    loss = ad.add(ad.add(ad.negate(metric), ad.multiply(dist, mu)), ad.multiply(scat, nu))
    return loss, (metric.item(), dist.item(), scat.item())


def train_task2(config: TrainConfig, task1: Task1Output, n_train: int | None = None,
                on_epoch=None) -> BoundaryOutput:
    """Alternate auxiliary-critic and B steps; ``on_epoch(epoch, b, critic)`` monitors progress."""
    if config.pool_size < config.batch_size:
        raise ContractError("pool size Q must be at least the batch size N")
    kind = config.divergence
    g = task1.g
    b = g.copy() if config.warm_start_b else init(g.spec, config.seed * 1000 + SEED_B)
    critic = task1.d.copy()
    out = BoundaryOutput(b, critic, [])
    rng = make_rng(config.seed * 1000 + SEED_LOOP)
    b_opt = Adam(b.values.size, config.lr_task2)
    c_opt = Adam(critic.values.size, config.lr_task2)
    steps = config.steps_per_epoch or max(1, -(-(n_train or config.n_samples) // config.batch_size))
    n, l = config.batch_size, config.latent_dim

    for epoch in range(config.epochs_task2):
        pool = evaluate(g, sample_latent(rng, config.pool_size, l))
        terms = []
        try:
            for _ in range(steps):
                # auxiliary critic: maximise the bound between B(z) and G(z)
                for _ in range(config.critic_steps):
                    b_now = evaluate(b, sample_latent(rng, n, l))
                    g_now = pool[rng.choice(config.pool_size, n, replace=False)]
                    ct = ad.Tensor(critic.values)
                    loss = gan_d_loss(kind, forward(critic.spec, ct, b_now),
                                      forward(critic.spec, ct, g_now))
                    c_opt.step(critic.values, ad.backward(loss)[ct])
                z = sample_latent(rng, n, l)
                g_now = pool[rng.choice(config.pool_size, n, replace=False)]
                bt = ad.Tensor(b.values)
                b_out = forward(b.spec, bt, z)
                loss, parts = boundary_loss(kind, critic, b_out, g_now, z, config.mu, config.nu,
                                            refs=pool, distance=config.distance)
                b_opt.step(b.values, ad.backward(loss)[bt])
                terms.append(parts)
        except NumericOverflowError:
            raise TrainingDivergedError("task2", out.trace) from None
        m, d, s = np.mean(terms, axis=0)
        out.trace.append((epoch + 1, float(m), float(d), float(s)))
        if on_epoch is not None:
            on_epoch(epoch + 1, b, critic)
    return out
