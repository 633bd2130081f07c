"""Stage 3: negative retraining of G' against C, then the anomaly discriminator J.

C is rewarded for calling real data and stage-1 samples normal and for
calling boundary samples and G' samples fake; G' is pushed to look normal to
C, which keeps it away from the boundary.  J is then trained to fire on
boundary samples and stay low on real data and G' samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .data import iter_batches, make_rng
from .errors import ContractError, NumericOverflowError, TrainingDivergedError
from .nets import ParamSet, critic_spec, evaluate, forward, init
from .optim import Adam
from .task1_gan import Task1Output, sample_latent
from .task2_boundary import BoundaryOutput

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-7
SEED_GP, SEED_C, SEED_J, SEED_LOOP, SEED_JLOOP = 31, 32, 33, 34, 35


@dataclass
class RetrainOutput:
    gprime: ParamSet
    c: ParamSet
    j: ParamSet | None = None
    trace: list = field(default_factory=list)    # (epoch, c_loss, gprime_loss)
    j_trace: list = field(default_factory=list)  # (epoch, j_loss)


def _clamped(p: ad.Tensor) -> ad.Tensor:
    return ad.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def _elog(p: ad.Tensor) -> ad.Tensor:
    return ad.mean(ad.log(_clamped(p)))


def _elog1m(p: ad.Tensor) -> ad.Tensor:
    return ad.mean(ad.log(ad.subtract(1.0, _clamped(p))))


def c_objective(c_gprime, c_x, c_b, c_g, alpha, beta, gamma) -> ad.Tensor:
    """The four-term value C maximises (inputs are probabilities)."""
    terms = _elog1m(c_gprime)
    if alpha:
        terms = ad.add(terms, ad.multiply(_elog(c_x), alpha))
    if beta:
        terms = ad.add(terms, ad.multiply(_elog1m(c_b), beta))
    if gamma:
        terms = ad.add(terms, ad.multiply(_elog(c_g), gamma))
    return terms


def c_loss(c_gprime, c_x, c_b, c_g, alpha: float, beta: float, gamma: float) -> ad.Tensor:
    return ad.negate(c_objective(c_gprime, c_x, c_b, c_g, alpha, beta, gamma))


def gprime_loss(c_gprime: ad.Tensor, nonsaturating: bool = False) -> ad.Tensor:
    """``E log(1 - C(G'(z)))``, or ``-E log C(G'(z))`` when non-saturating."""
    if nonsaturating:
        return ad.negate(_elog(c_gprime))
    return _elog1m(c_gprime)


def j_objective(j_b, j_x, j_gprime, delta: float) -> ad.Tensor:
    if not 0.0 <= delta <= 1.0:
        raise ContractError("delta must lie in [0, 1]")
    out = _elog(j_b)
    if delta:
        out = ad.add(out, ad.multiply(_elog1m(j_x), delta))
    if delta != 1.0:
        out = ad.add(out, ad.multiply(_elog1m(j_gprime), 1.0 - delta))
    return out


def j_loss(j_b, j_x, j_gprime, delta: float) -> ad.Tensor:
    return ad.negate(j_objective(j_b, j_x, j_gprime, delta))


def optimal_c(p_x, p_gprime, p_b, alpha_plus_gamma: float, beta: float):
    """Pointwise maximiser of the C objective when real and stage-1 samples share ``p_x``."""
    p_x, p_gprime, p_b = (np.asarray(a, dtype=np.float64) for a in (p_x, p_gprime, p_b))
    pos = alpha_plus_gamma * p_x
    return pos / (pos + p_gprime + beta * p_b)


def c_value_discrete(p_x, p_gprime, p_b, c, alpha_plus_gamma: float, beta: float) -> float:
    """Expected C objective over a finite set of atoms for a given C table."""
    p_x, p_gprime, p_b, c = (np.asarray(a, dtype=np.float64) for a in (p_x, p_gprime, p_b, c))
    with np.errstate(divide="ignore", invalid="ignore"):
        lc = np.where(p_x > 0, np.log(c), 0.0)
        l1c = np.log1p(-c)
    return float(np.sum(p_gprime * l1c) + alpha_plus_gamma * np.sum(p_x * lc) + beta * np.sum(p_b * l1c))


def _sigmoid_out(spec, params, x):
    return ad.sigmoid(forward(spec, params, x))


def train_task3(config: TrainConfig, task1: Task1Output, task2: BoundaryOutput,
                data: np.ndarray) -> RetrainOutput:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ContractError("task3 needs a non-empty data set")
    g, b = task1.g, task2.b
    gprime = g.copy() if config.warm_start_gprime else init(g.spec, config.seed * 1000 + SEED_GP)
    if config.warm_start_c:
        c = task1.d.copy()
    else:
        c = init(critic_spec(config.data_dim, config.hidden), config.seed * 1000 + SEED_C)
    rng = make_rng(config.seed * 1000 + SEED_LOOP)
    g_opt = Adam(gprime.values.size, config.lr_task3)
    c_opt = Adam(c.values.size, config.lr_task3)
    out = RetrainOutput(gprime, c)
    l = config.latent_dim

    for epoch in range(config.epochs_task3):
        c_losses, g_losses = [], []
        try:
            for idx in iter_batches(len(data), config.batch_size, rng):
                n = len(idx)
                x = data[idx]
                for _ in range(config.critic_steps):
                    gp_s = evaluate(gprime, sample_latent(rng, n, l))
                    b_s = evaluate(b, sample_latent(rng, n, l))
                    g_s = evaluate(g, sample_latent(rng, n, l))
                    ct = ad.Tensor(c.values)
                    loss = c_loss(_sigmoid_out(c.spec, ct, gp_s), _sigmoid_out(c.spec, ct, x),
                                  _sigmoid_out(c.spec, ct, b_s), _sigmoid_out(c.spec, ct, g_s),
                                  config.alpha, config.beta, config.gamma)
                    c_opt.step(c.values, ad.backward(loss)[ct])
                    c_losses.append(loss.item())
                gt = ad.Tensor(gprime.values)
                gp_t = forward(gprime.spec, gt, sample_latent(rng, n, l))
                loss = gprime_loss(_sigmoid_out(c.spec, c, gp_t), config.nonsaturating)
                g_opt.step(gprime.values, ad.backward(loss)[gt])
                g_losses.append(loss.item())
        except NumericOverflowError:
            raise TrainingDivergedError("task3", out.trace) from None
        out.trace.append((epoch + 1, float(np.mean(c_losses)), float(np.mean(g_losses))))
    return out


def train_j(config: TrainConfig, task2: BoundaryOutput, task3: RetrainOutput,
            data: np.ndarray) -> RetrainOutput:
    """Train J with B and G' frozen; fills ``task3.j`` and ``task3.j_trace``."""
    data = np.asarray(data, dtype=np.float64)
    b, gprime = task2.b, task3.gprime
    j = init(critic_spec(config.data_dim, config.hidden), config.seed * 1000 + SEED_J)
    rng = make_rng(config.seed * 1000 + SEED_JLOOP)
    opt = Adam(j.values.size, config.lr_j)
    l = config.latent_dim
    trace = []
    for epoch in range(config.epochs_j):
        losses = []
        try:
            for idx in iter_batches(len(data), config.batch_size, rng):
                n = len(idx)
                b_s = evaluate(b, sample_latent(rng, n, l))
                gp_s = evaluate(gprime, sample_latent(rng, n, l))
                jt = ad.Tensor(j.values)
                loss = j_loss(_sigmoid_out(j.spec, jt, b_s), _sigmoid_out(j.spec, jt, data[idx]),
                              _sigmoid_out(j.spec, jt, gp_s), config.delta)
                opt.step(j.values, ad.backward(loss)[jt])
                losses.append(loss.item())
        except NumericOverflowError:
            raise TrainingDivergedError("j", trace) from None
        trace.append((epoch + 1, float(np.mean(losses))))
    task3.j = j
    task3.j_trace = trace
    if trace:
        b_mean = float(np.mean(_sigmoid(evaluate(j, evaluate(b, sample_latent(rng, 512, l))))))
        x_mean = float(np.mean(_sigmoid(evaluate(j, data[: min(len(data), 512)]))))
        if not b_mean > x_mean:
            log.warning("J sanity check failed: mean J(B)=%.3f <= mean J(x)=%.3f", b_mean, x_mean)
    return task3


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(v)))
