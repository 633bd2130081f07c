"""Training configuration and its ``key = value`` file format.

Every key below may appear in a config file; keys not listed are rejected.
An empty file yields the defaults.  Lines are ``key = value``; ``#`` starts
a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .divergence import DivergenceKind
from .errors import ConfigError, ParseError


@dataclass
class TrainConfig:
    divergence: DivergenceKind = DivergenceKind.GAN

    # boundary loss weights (distance, scattering)
    mu: float = 0.2
    nu: float = 0.25
    distance: str = "pointset"  # or "chamfer"

    # negative retraining weights; only alpha + gamma is fixed by the method
    alpha: float = 0.35
    gamma: float = 0.35
    beta: float = 0.7
    # anomaly discriminator weight on real data vs retrained samples
    delta: float = 0.5

    # inference
    lam: float = 1.0
    tau: float | None = None       # None -> quantile of validation scores
    tau_quantile: float = 0.95

    batch_size: int = 256          # N
    pool_size: int = 1024          # Q
    latent_dim: int = 2            # l
    data_dim: int = 2              # k
    hidden: int = 64

    lr_task1: float = 2e-4
    lr_task2: float = 2e-4
    lr_task3: float = 2e-4
    lr_j: float = 2e-4
    epochs_task1: int = 400
    epochs_task2: int = 100
    epochs_task3: int = 100
    epochs_j: int = 100
    steps_per_epoch: int = 0       # task2 only; 0 -> ceil(n_train / batch_size)
    patience: int = 0              # 0 disables early stopping
    critic_steps: int = 1

    nonsaturating: bool = True     # generator losses of task1 and task3
    warm_start_b: bool = True      # B starts from G
    warm_start_gprime: bool = True  # G' starts from G
    warm_start_c: bool = False     # C starts from D

    seed: int = 0
    dataset: str = "disk"          # disk | ring | mixture | csv
    data: str = ""                 # CSV path when dataset = csv
    n_samples: int = 2000
    modes: int = 8
    radius: float = 1.0
    sigma: float = 0.2
    r_in: float = 0.5
    val_fraction: float = 0.1
    grid_resolution: int = 41
    grid_margin: float = 1.0
    out: str = "runs/default"
    sweep: str = ""                # e.g. "mu=0.1|0.2; nu=0.25|0.5"

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.name if isinstance(v, DivergenceKind) else v
        return out


def validate(cfg: TrainConfig) -> None:
    if cfg.mu < 0:
        raise ConfigError("mu", "must be >= 0")
    if cfg.nu < 0:
        raise ConfigError("nu", "must be >= 0")
    if cfg.alpha < 0 or cfg.gamma < 0 or cfg.beta < 0:
        raise ConfigError("alpha/gamma/beta", "weights must be >= 0")
    s = cfg.alpha + cfg.gamma
    if not 0.0 <= s <= 1.0:
        raise ConfigError("alpha+gamma", f"alpha + gamma = {s:g} must lie in [0, 1]")
    if cfg.beta < s - 1.0 - 1e-12:
        raise ConfigError("beta", f"beta = {cfg.beta:g} must be >= alpha + gamma - 1 = {s - 1:g}")
    if not 0.0 <= cfg.delta <= 1.0:
        raise ConfigError("delta", "must lie in [0, 1]")
    if cfg.lam < 0:
        raise ConfigError("lam", "must be >= 0")
    if not 0.0 < cfg.tau_quantile < 1.0:
        raise ConfigError("tau_quantile", "must lie in (0, 1)")
    if cfg.batch_size < 2:
        raise ConfigError("batch_size", "N must be >= 2")
    if cfg.pool_size < cfg.batch_size:
        raise ConfigError("pool_size", "Q must be >= N")
    if cfg.distance not in ("pointset", "chamfer"):
        raise ConfigError("distance", "must be 'pointset' or 'chamfer'")
    for name in ("latent_dim", "data_dim", "hidden", "critic_steps"):
        if getattr(cfg, name) < 1:
            raise ConfigError(name, "must be >= 1")
    for name in ("epochs_task1", "epochs_task2", "epochs_task3", "epochs_j", "patience",
                 "steps_per_epoch"):
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be >= 0")
    for name in ("lr_task1", "lr_task2", "lr_task3", "lr_j"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(name, "must be > 0")
    if cfg.dataset not in ("disk", "ring", "mixture", "csv"):
        raise ConfigError("dataset", "must be disk, ring, mixture or csv")
    if cfg.dataset == "csv" and not cfg.data:
        raise ConfigError("data", "a CSV path is required when dataset = csv")


def _coerce(f: dataclasses.Field, raw: str, lineno: int):
    if f.name == "divergence":
        try:
            return DivergenceKind.parse(raw)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind.startswith("float | None"):
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ParseError(f"{f.name}: cannot parse {raw!r} as {kind}", lineno) from None
    return raw


def parse_config_text(text: str, **overrides) -> TrainConfig:
    known = {f.name: f for f in fields(TrainConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise ConfigError(key, "unknown key")
        values[key] = _coerce(known[key], raw, lineno)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)


def parse_config(path, **overrides) -> TrainConfig:
    return parse_config_text(Path(path).read_text(), **overrides)


def dump_config(cfg: TrainConfig) -> str:
    lines = []
    for key, value in cfg.as_dict().items():
        lines.append(f"{key} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"


def parse_sweep(spec: str) -> dict[str, list[str]]:
    """``"mu=0.1|0.2; nu=0.25"`` -> ``{"mu": ["0.1", "0.2"], "nu": ["0.25"]}``."""
    grid = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError("sweep", f"entry {part!r} is not key=v1|v2")
        key, vals = (p.strip() for p in part.split("=", 1))
        if key not in {f.name for f in fields(TrainConfig)}:
            raise ConfigError("sweep", f"unknown key {key!r}")
        grid[key] = [v.strip() for v in vals.split("|") if v.strip()]
    return grid
