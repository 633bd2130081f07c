"""Command-line interface.

Subcommands::

    synth     write the configured synthetic dataset to CSV
    train     run one stage (task1, task2, task3, j) or all of them
    score     score points with the full, task3 or task1 anomaly score
    evaluate  metric report from a score CSV with labels
    ablate    score all three modes on the benchmark grid and tabulate
    seeds     repeat train + ablate over a seed list, report mean and SD

Every command that writes files records them in ``<out>/manifest.json``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import TrainConfig, dump_config, parse_config
from .data import load_csv, save_csv
from .errors import CheckpointError, ConfigError, OmasganError, StageDependencyError
from .inference import ScoreMode, read_scores, write_scores
from .metrics import evaluate_scores
from .nets import load_checkpoint, save_checkpoint
from .pipeline import (
    STAGES,
    PipelineResult,
    make_benchmark,
    make_dataset,
    params_checksum,
    run_pipeline,
    run_sweep,
    split_normal,
    stage_paths,
)
from .task1_gan import Task1Output
from .task2_boundary import BoundaryOutput
from .task3_retrain import RetrainOutput

log = logging.getLogger("omasgan")

# checkpoints each stage produces, and the stage that produces each one
STAGE_OUTPUTS = {"task1": ("g", "d"), "task2": ("b", "b_critic"), "task3": ("gprime", "c"), "j": ("j",)}
STAGE_INPUTS = {"task1": (), "task2": ("g", "d"), "task3": ("g", "d", "b", "b_critic"),
                "j": ("b", "b_critic", "gprime", "c")}
PRODUCER = {name: stage for stage, names in STAGE_OUTPUTS.items() for name in names}
TRACE_HEADERS = {"task1": "epoch,d_loss,g_loss", "task2": "epoch,metric,distance,scatter",
                 "task3": "epoch,c_loss,gprime_loss", "j": "epoch,j_loss"}
METRIC_KEYS = ("auroc", "auprc", "f1", "precision", "recall", "accuracy")


# ------------------------------------------------------------------ run dir


class RunDir:
    """An output directory holding checkpoints, traces, reports and the manifest."""

    def __init__(self, out):
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.paths = stage_paths(self.root)
        self.manifest_path = self.root / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        else:
            self.manifest = {"config": {}, "stages": {}, "scores": {}, "reports": [], "artifacts": []}

    def rel(self, path: Path) -> str:
        path = Path(path)
        try:
            return str(path.resolve().relative_to(self.root.resolve()))
        except ValueError:
            return str(path.resolve())

    def abs(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.root / p

    def record_config(self, cfg: TrainConfig) -> None:
        (self.root / "config.cfg").write_text(dump_config(cfg))
        self.manifest["config"] = cfg.as_dict()
        self._add_artifact(self.root / "config.cfg")

    def _add_artifact(self, path) -> None:
        rel = self.rel(path)
        if rel not in self.manifest["artifacts"]:
            self.manifest["artifacts"].append(rel)

    def save(self) -> Path:
        referenced = list(self.manifest["artifacts"])
        for st in self.manifest["stages"].values():
            referenced += st["checkpoints"] + st["traces"]
        referenced += list(self.manifest["scores"]) + self.manifest["reports"]
        missing = [r for r in referenced if not self.abs(r).exists()]
        if missing:
            raise OmasganError(f"manifest references missing files: {missing}")
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        return self.manifest_path

    # checkpoints
    def load(self, stage: str, name: str, spec=None):
        path = self.paths[name]
        if not path.exists():
            raise StageDependencyError(stage, PRODUCER[name])
        return load_checkpoint(path, spec)

    def load_result(self, cfg: TrainConfig, stage: str, names) -> PipelineResult:
        nets = {n: self.load(stage, n) for n in names}
        res = PipelineResult(cfg)
        if "g" in nets:
            res.task1 = Task1Output(nets["g"], nets["d"], [], cfg.divergence)
        if "b" in nets:
            res.task2 = BoundaryOutput(nets["b"], nets["b_critic"], [])
        if "gprime" in nets:
            res.task3 = RetrainOutput(nets["gprime"], nets["c"], nets.get("j"))
        return res

    def store_stage(self, stage: str, result: PipelineResult, seconds: float) -> None:
        objs = {"g": lambda r: r.task1.g, "d": lambda r: r.task1.d, "b": lambda r: r.task2.b,
                "b_critic": lambda r: r.task2.critic, "gprime": lambda r: r.task3.gprime,
                "c": lambda r: r.task3.c, "j": lambda r: r.task3.j}
        ckpts = []
        for name in STAGE_OUTPUTS[stage]:
            save_checkpoint(objs[name](result), self.paths[name])
            ckpts.append(self.rel(self.paths[name]))
        trace = {"task1": lambda r: r.task1.trace, "task2": lambda r: r.task2.trace,
                 "task3": lambda r: r.task3.trace, "j": lambda r: r.task3.j_trace}[stage](result)
        trace_path = self.root / f"trace_{stage}.csv"
        write_trace(trace_path, TRACE_HEADERS[stage], trace)
        self.manifest["stages"][stage] = {"checkpoints": ckpts, "traces": [self.rel(trace_path)],
                                          "seconds": round(seconds, 3)}

    def add_scores(self, path, tau: float, mode: str) -> None:
        self.manifest["scores"][self.rel(path)] = {"tau": tau, "mode": mode}

    def add_report(self, *paths) -> None:
        for p in paths:
            r = self.rel(p)
            if r not in self.manifest["reports"]:
                self.manifest["reports"].append(r)


def write_trace(path, header: str, rows) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh)
        for row in rows:
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    return Path(path)


# --------------------------------------------------------------- data setup


def training_split(cfg: TrainConfig):
    """Normal-only train/val split plus the labelled evaluation set (or None)."""
    if cfg.dataset == "csv":
        train, val = split_normal(load_csv(cfg.data).points, cfg.val_fraction, cfg.seed)
        return train, val, None
    bench = make_benchmark(cfg)
    return bench.train, bench.val, bench


def load_cfg(args) -> TrainConfig:
    cfg = parse_config(args.config) if getattr(args, "config", None) else TrainConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "data", None) and args.command != "synth":
        changes.update(dataset="csv", data=args.data)
    return cfg.replace(**changes) if changes else cfg


# ----------------------------------------------------------------- commands


def train_stage(cfg: TrainConfig, run: RunDir, stage: str) -> PipelineResult:
    """Run one stage from the checkpoints on disk, then write its own."""
    train, val, _ = training_split(cfg)
    res = run.load_result(cfg, stage, STAGE_INPUTS[stage])
    if stage == "j":
        res.task3.j = None
    t0 = time.perf_counter()
    res = run_pipeline(cfg, train, val, stages=(stage,), result=res)
    run.store_stage(stage, res, time.perf_counter() - t0)
    return res


def cmd_synth(cfg: TrainConfig, args) -> int:
    run = RunDir(cfg.out)
    if cfg.dataset == "csv":
        raise ConfigError("dataset", "synth needs a synthetic dataset (disk, ring or mixture)")
    path = Path(args.data) if args.data else run.root / "data.csv"
    save_csv(make_dataset(cfg), path)
    run.manifest["artifacts"].append(run.rel(path))
    run.record_config(cfg)
    run.save()
    print(path)
    return 0


def cmd_train(cfg: TrainConfig, args) -> int:
    run = RunDir(cfg.out)
    stages = STAGES if args.stage == "all" else (args.stage,)
    if args.stage == "all" and cfg.sweep:
        train, val, _ = training_split(cfg)
        t0 = time.perf_counter()
        best, res, table = run_sweep(cfg, train, val)
        with open(run.root / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["setting", "validation_loss_sum"])
            for changes, loss in table:
                w.writerow([";".join(f"{k}={v}" for k, v in changes.items()), repr(loss)])
        run.manifest["artifacts"].append(run.rel(run.root / "sweep.csv"))
        seconds = (time.perf_counter() - t0) / len(STAGES)
        for stage in STAGES:
            run.store_stage(stage, res, seconds)
        cfg = best.replace(out=cfg.out)
    else:
        for stage in stages:
            train_stage(cfg, run, stage)
    run.record_config(cfg)
    run.save()
    for stage in stages:
        print(f"{stage}: {run.manifest['stages'][stage]['seconds']:.1f}s")
    return 0


def _scorer(cfg: TrainConfig, run: RunDir, mode: ScoreMode):
    needs = {ScoreMode.Task1Only: ("g", "d"), ScoreMode.Task3Only: ("g", "d", "gprime", "c"),
             ScoreMode.Full: ("g", "d", "gprime", "c", "j")}[mode]
    res = run.load_result(cfg, f"score --mode {mode.value}", needs)
    _, val, bench = training_split(cfg)
    return res.scorer(val), val, bench


def score_mode(cfg: TrainConfig, run: RunDir, mode: ScoreMode, points=None, labels=None):
    scorer, val, bench = _scorer(cfg, run, mode)
    if points is None:
        if bench is None:
            raise ConfigError("points", "score needs --points when training data is a CSV")
        points, labels = bench.test, bench.test_labels
    tau = cfg.tau if cfg.tau is not None else scorer.threshold(val, mode, cfg.tau_quantile)
    scores = scorer.score(points, mode)
    path = write_scores(run.root / f"scores_{mode.value}.csv", scores, labels, tau)
    run.add_scores(path, tau, mode.value)
    return scores, labels, tau, path


def cmd_score(cfg: TrainConfig, args) -> int:
    run = RunDir(cfg.out)
    mode = ScoreMode.parse(args.mode)
    points = labels = None
    if args.points:
        ds = load_csv(args.points)
        points, labels = ds.points, ds.labels
    _, _, tau, path = score_mode(cfg, run, mode, points, labels)
    run.save()
    print(f"{path} (tau={tau:.6g})")
    return 0


def cmd_evaluate(cfg: TrainConfig, args) -> int:
    run = RunDir(cfg.out)
    path = Path(args.scores) if args.scores else run.root / "scores_full.csv"
    scores, labels = read_scores(path)
    if labels is None:
        raise ConfigError("scores", f"{path} has no label column")
    tau = args.tau
    if tau is None:
        tau = run.manifest["scores"].get(run.rel(path), {}).get("tau")
    if tau is None:
        tau = cfg.tau
    if tau is None:
        raise ConfigError("tau", "no threshold recorded for this score file; pass --tau")
    report = evaluate_scores(scores, labels, tau, args.bins)
    stem = path.stem.replace("scores", "metrics", 1) if path.stem.startswith("scores") else f"metrics_{path.stem}"
    run.add_report(report.write_csv(run.root / f"{stem}.csv"), report.write_json(run.root / f"{stem}.json"))
    run.save()
    for k, v in report.scalars().items():
        print(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    return 0


def ablate(cfg: TrainConfig, run: RunDir, retrain: bool = False) -> dict:
    if cfg.dataset == "csv":
        raise ConfigError("dataset", "ablate runs on a synthetic benchmark grid")
    for stage in STAGES:
        if retrain or stage not in run.manifest["stages"]:
            train_stage(cfg, run, stage)
    rows = {}
    for mode in ScoreMode:
        scores, labels, tau, path = score_mode(cfg, run, mode)
        rep = evaluate_scores(scores, labels, tau)
        stem = f"metrics_{mode.value}"
        run.add_report(rep.write_csv(run.root / f"{stem}.csv"), rep.write_json(run.root / f"{stem}.json"))
        rows[mode.value] = {k: float(getattr(rep, k)) for k in METRIC_KEYS}
    table = run.root / "ablation.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", *METRIC_KEYS])
        for mode, vals in rows.items():
            w.writerow([mode, *(repr(vals[k]) for k in METRIC_KEYS)])
    run.add_report(table)
    run.record_config(cfg)
    run.save()
    return rows


def _print_table(rows: dict) -> None:
    print("mode    " + " ".join(f"{k:>9}" for k in METRIC_KEYS))
    for mode, vals in rows.items():
        print(f"{mode:<8}" + " ".join(f"{vals[k]:9.4f}" for k in METRIC_KEYS))


def cmd_ablate(cfg: TrainConfig, args) -> int:
    _print_table(ablate(cfg, RunDir(cfg.out), retrain=args.retrain))
    return 0


def _seed_job(cfg: TrainConfig, seed: int, out: str, retrain: bool) -> dict:
    c = cfg.replace(seed=seed, out=out)
    return ablate(c, RunDir(out), retrain=retrain)


def seed_summary(per_seed: dict) -> dict:
    """``{mode: {metric: (mean, sd)}}`` with the sample standard deviation."""
    modes = next(iter(per_seed.values())).keys()
    out = {}
    for mode in modes:
        out[mode] = {}
        for k in METRIC_KEYS:
            v = np.array([per_seed[s][mode][k] for s in per_seed])
            out[mode][k] = (float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0)
    return out


def cmd_seeds(cfg: TrainConfig, args) -> int:
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    root = RunDir(cfg.out)
    outs = {s: str(root.root / f"seed_{s}") for s in seeds}
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            futs = {s: pool.submit(_seed_job, cfg, s, outs[s], args.retrain) for s in seeds}
            per_seed = {s: f.result() for s, f in futs.items()}
    else:
        per_seed = {s: _seed_job(cfg, s, outs[s], args.retrain) for s in seeds}
    summary = seed_summary(per_seed)
    path = root.root / "seeds.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "metric", "mean", "sd", *(f"seed_{s}" for s in seeds)])
        for mode, vals in summary.items():
            for k, (m, sd) in vals.items():
                w.writerow([mode, k, repr(m), repr(sd), *(repr(per_seed[s][mode][k]) for s in seeds)])
    root.add_report(path)
    root.record_config(cfg)
    root.save()
    for mode, vals in summary.items():
        print(f"{mode:<8}" + "  ".join(f"{k}={m:.4f}±{sd:.4f}" for k, (m, sd) in vals.items()))
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help="CSV of normal training points (synth: where to write)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="omasgan", description="Boundary-sample anomaly detection pipeline")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write the synthetic dataset to CSV")
    t = sub.add_parser("train", parents=[common], help="train one stage or all")
    t.add_argument("--stage", choices=[*STAGES, "all"], default="all")
    s = sub.add_parser("score", parents=[common], help="score points")
    s.add_argument("--mode", choices=[m.value for m in ScoreMode], default="full")
    s.add_argument("--points", help="CSV of points to score (default: benchmark grid)")
    e = sub.add_parser("evaluate", parents=[common], help="metrics from a labelled score CSV")
    e.add_argument("--scores", help="score CSV (default: <out>/scores_full.csv)")
    e.add_argument("--tau", type=float, help="threshold (default: the one recorded when scoring)")
    e.add_argument("--bins", type=int, default=20)
    a = sub.add_parser("ablate", parents=[common], help="compare the three score modes")
    a.add_argument("--retrain", action="store_true", help="retrain even if checkpoints exist")
    sd = sub.add_parser("seeds", parents=[common], help="repeat ablate over seeds")
    sd.add_argument("--seeds", default="0,1,2")
    sd.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    sd.add_argument("--retrain", action="store_true")
    return p


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "score": cmd_score, "evaluate": cmd_evaluate,
            "ablate": cmd_ablate, "seeds": cmd_seeds}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = load_cfg(args)
        return COMMANDS[args.command](cfg, args)
    except StageDependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OmasganError, CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
