"""Stage 1: an f-GAN (generator G, critic D) fitted to the normal data."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import iter_batches, make_rng
from .divergence import (
    DivergenceKind,
    activation_t,
    conjugate_of_activation_t,
    variational_bound,
    variational_bound_t,
)
from .errors import ContractError, NumericOverflowError, TrainingDivergedError
from .nets import ParamSet, critic_spec, evaluate, forward, generator_spec, init
from .optim import Adam

log = logging.getLogger(__name__)

# seed offsets keep the streams of different networks/stages apart
SEED_G, SEED_D, SEED_LOOP = 11, 12, 13


@dataclass
class Task1Output:
    g: ParamSet
    d: ParamSet
    trace: list = field(default_factory=list)  # (epoch, d_loss, g_loss)
    kind: DivergenceKind = DivergenceKind.GAN


def gan_d_loss(kind: DivergenceKind, v_real: ad.Tensor, v_fake: ad.Tensor) -> ad.Tensor:
    """Negated variational bound; the critic minimises this."""
    return ad.negate(variational_bound_t(kind, v_real, v_fake))


def gan_g_loss(kind: DivergenceKind, v_fake: ad.Tensor, nonsaturating: bool = False) -> ad.Tensor:
    """Generator loss.

    Saturating form (the saddle objective itself): ``-E f*(g_f(V(G(z))))``.
    Non-saturating form: ``-E g_f(V(G(z)))``, i.e. the generator pushes its
    samples towards where the critic scores real data.
    """
    if v_fake.value.size == 0:
        raise ContractError("gan_g_loss needs a non-empty batch")
    if nonsaturating:
        return ad.negate(ad.mean(activation_t(kind, v_fake)))
    return ad.negate(ad.mean(conjugate_of_activation_t(kind, v_fake)))


def classical_gan_value(d_real: np.ndarray, d_fake: np.ndarray) -> float:
    """``E log D(x) + E log(1 - D(G(z)))`` for probability-valued D."""
    return float(np.mean(np.log(d_real)) + np.mean(np.log(1.0 - d_fake)))


def sample_latent(rng, n: int, dim: int) -> np.ndarray:
    return rng.standard_normal((n, dim))


def generate(g: ParamSet, n: int, seed: int) -> np.ndarray:
    return evaluate(g, sample_latent(make_rng(seed), n, g.spec.in_dim))


def train_task1(config: TrainConfig, data: np.ndarray, val: np.ndarray | None = None,
                on_epoch=None) -> Task1Output:
    """Alternate critic and generator steps over ``data``.

    ``on_epoch(epoch, g, d)``, if given, is called after every epoch with the
    live parameter sets (useful for monitoring; must not modify them).
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0 or data.shape[1] != config.data_dim:
        raise ContractError(f"task1 needs a non-empty n x {config.data_dim} data set, got {data.shape}")
    kind = config.divergence
    g_spec = generator_spec(config.latent_dim, config.data_dim, config.hidden)
    d_spec = critic_spec(config.data_dim, config.hidden)
    g = init(g_spec, config.seed * 1000 + SEED_G)
    d = init(d_spec, config.seed * 1000 + SEED_D)
    rng = make_rng(config.seed * 1000 + SEED_LOOP)
    g_opt = Adam(g.values.size, config.lr_task1)
    d_opt = Adam(d.values.size, config.lr_task1)
    out = Task1Output(g, d, [], kind)
    if config.epochs_task1 == 0:
        return out

    best, best_epoch = math.inf, 0
    if val is not None and config.patience:
        val = np.asarray(val, dtype=np.float64)
        val_z = sample_latent(make_rng(config.seed * 1000 + 99), max(len(val), 2), config.latent_dim)
    for epoch in range(config.epochs_task1):
        d_losses, g_losses = [], []
        try:
            for idx in iter_batches(len(data), config.batch_size, rng):
                x = data[idx]
                for _ in range(config.critic_steps):
                    fake = evaluate(g, sample_latent(rng, len(idx), config.latent_dim))
                    dt = ad.Tensor(d.values)
                    loss = gan_d_loss(kind, forward(d_spec, dt, x), forward(d_spec, dt, fake))
                    d_opt.step(d.values, ad.backward(loss)[dt])
                    d_losses.append(loss.item())
                gt = ad.Tensor(g.values)
                fake_t = forward(g_spec, gt, sample_latent(rng, len(idx), config.latent_dim))
                loss = gan_g_loss(kind, forward(d_spec, d, fake_t), config.nonsaturating)
                g_opt.step(g.values, ad.backward(loss)[gt])
                g_losses.append(loss.item())
        except NumericOverflowError:
            raise TrainingDivergedError("task1", out.trace) from None
        out.trace.append((epoch + 1, float(np.mean(d_losses)), float(np.mean(g_losses))))
        if on_epoch is not None:
            on_epoch(epoch + 1, g, d)

        if val is not None and config.patience:
            score = variational_bound(kind, evaluate(d, val), evaluate(d, evaluate(g, val_z)))
            if score < best - 1e-6:
                best, best_epoch = score, epoch
            elif epoch - best_epoch >= config.patience:
                log.info("task1 early stop at epoch %d", epoch + 1)
                break
    return out
