"""End-to-end orchestration of the four training stages and their evaluation."""

from __future__ import annotations

import hashlib
import itertools
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, _coerce, parse_sweep
from .data import PointCloudDataset, gen_disk, gen_gaussian_mixture, gen_ring, grid_points, load_csv, \
    make_rng, support_labels
from .inference import ScoreMode, Scorer
from .metrics import MetricsReport, evaluate_scores
from .task1_gan import Task1Output, train_task1
from .task2_boundary import BoundaryOutput, train_task2
from .task3_retrain import RetrainOutput, train_j, train_task3

log = logging.getLogger(__name__)

STAGES = ("task1", "task2", "task3", "j")


@dataclass
class Benchmark:
    """Normal-only train/val split plus a labelled evaluation grid."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray
    name: str


def make_dataset(cfg: TrainConfig, seed: int | None = None) -> PointCloudDataset:
    seed = cfg.seed if seed is None else seed
    if cfg.dataset == "disk":
        return gen_disk(cfg.radius, cfg.n_samples, seed)
    if cfg.dataset == "ring":
        return gen_ring(cfg.r_in, cfg.radius, cfg.n_samples, seed)
    if cfg.dataset == "mixture":
        return gen_gaussian_mixture(cfg.modes, cfg.radius, cfg.sigma, cfg.n_samples, seed)
    return load_csv(cfg.data)


def _support_params(cfg: TrainConfig) -> dict:
    if cfg.dataset == "mixture":
        return dict(modes=cfg.modes, radius=cfg.radius, sigma=cfg.sigma)
    if cfg.dataset == "ring":
        return dict(r_in=cfg.r_in, r_out=cfg.radius)
    return dict(radius=cfg.radius)


def split_normal(points: np.ndarray, val_fraction: float, seed: int):
    perm = make_rng(seed * 1000 + 7).permutation(len(points))
    n_val = int(round(val_fraction * len(points)))
    return points[perm[n_val:]], points[perm[:n_val]]


def make_benchmark(cfg: TrainConfig) -> Benchmark:
    """Synthetic benchmark: grid of equidistant points labelled by support membership."""
    ds = make_dataset(cfg)
    train, val = split_normal(ds.points, cfg.val_fraction, cfg.seed)
    if cfg.dataset == "csv":
        raise ValueError("grid benchmarks need a synthetic dataset")
    lo = ds.points.min(axis=0) - cfg.grid_margin
    hi = ds.points.max(axis=0) + cfg.grid_margin
    grid = grid_points(list(zip(lo, hi)), cfg.grid_resolution)
    labels = support_labels(grid, cfg.dataset, **_support_params(cfg))
    return Benchmark(train, val, grid, labels, ds.name)


@dataclass
class PipelineResult:
    config: TrainConfig
    task1: Task1Output | None = None
    task2: BoundaryOutput | None = None
    task3: RetrainOutput | None = None
    timings: dict = field(default_factory=dict)

    def scorer(self, val: np.ndarray) -> Scorer:
        s = Scorer(lam=self.config.lam, d_kind=self.config.divergence,
                   d=self.task1.d if self.task1 else None)
        if self.task3 is not None:
            s.c, s.j = self.task3.c, self.task3.j
        return s.fit(val)


def run_pipeline(cfg: TrainConfig, train: np.ndarray, val: np.ndarray | None = None,
                 stages=STAGES, result: PipelineResult | None = None) -> PipelineResult:
    result = result or PipelineResult(cfg)
    for stage in stages:
        t0 = time.perf_counter()
        if stage == "task1":
            result.task1 = train_task1(cfg, train, val)
        elif stage == "task2":
            result.task2 = train_task2(cfg, result.task1, n_train=len(train))
        elif stage == "task3":
            result.task3 = train_task3(cfg, result.task1, result.task2, train)
        elif stage == "j":
            train_j(cfg, result.task2, result.task3, train)
        else:
            raise ValueError(f"unknown stage {stage!r}")
        result.timings[stage] = time.perf_counter() - t0
        log.info("%s finished in %.1fs", stage, result.timings[stage])
    return result


def evaluate_modes(result: PipelineResult, bench: Benchmark, modes=tuple(ScoreMode),
                   bins: int = 20) -> dict[ScoreMode, MetricsReport]:
    scorer = result.scorer(bench.val)
    cfg = result.config
    reports = {}
    for mode in modes:
        scores = scorer.score(bench.test, mode)
        tau = cfg.tau if cfg.tau is not None else scorer.threshold(bench.val, mode, cfg.tau_quantile)
        reports[mode] = evaluate_scores(scores, bench.test_labels, tau, bins)
    return reports


def validation_loss_sum(result: PipelineResult) -> float:
    """Unweighted sum of the final logged loss terms of stages 2 and 3."""
    total = 0.0
    if result.task2 and result.task2.trace:
        _, m, d, s = result.task2.trace[-1]
        total += -m + d + s
    if result.task3 and result.task3.trace:
        total += sum(result.task3.trace[-1][1:])
    if result.task3 and result.task3.j_trace:
        total += result.task3.j_trace[-1][1]
    return total


def run_sweep(cfg: TrainConfig, train, val, task1: Task1Output | None = None):
    """Grid over ``cfg.sweep``; returns ``(best_config, best_result, table)``.

    Stage 1 is shared across grid points since no swept key of stages 2-3
    affects it.
    """
    grid = parse_sweep(cfg.sweep)
    if not grid:
        res = run_pipeline(cfg, train, val)
        return cfg, res, []
    from dataclasses import fields
    known = {f.name: f for f in fields(TrainConfig)}
    base = PipelineResult(cfg, task1=task1 or train_task1(cfg, train, val))
    table, best = [], None
    for combo in itertools.product(*grid.values()):
        changes = {k: _coerce(known[k], v, 0) for k, v in zip(grid, combo)}
        c = cfg.replace(sweep="", **changes)
        res = run_pipeline(c, train, val, stages=("task2", "task3", "j"),
                           result=PipelineResult(c, task1=base.task1))
        loss = validation_loss_sum(res)
        table.append((changes, loss))
        if best is None or loss < best[2]:
            best = (c, res, loss)
    return best[0], best[1], table


def params_checksum(*paramsets) -> str:
    h = hashlib.sha256()
    for p in paramsets:
        h.update(np.ascontiguousarray(p.values.astype("<f4")).tobytes())
    return h.hexdigest()


def stage_paths(out: Path) -> dict[str, Path]:
    return {"g": out / "g.ckpt", "d": out / "d.ckpt", "b": out / "b.ckpt", "b_critic": out / "b_critic.ckpt",
            "gprime": out / "gprime.ckpt", "c": out / "c.ckpt", "j": out / "j.ckpt"}
