"""Synthetic point clouds, CSV I/O and anomaly-detection task construction.

All randomness goes through :func:`make_rng`, a numpy ``Generator`` on the
Philox-4x64 counter-based bit generator, so a seed fully determines every
dataset and split.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class PointCloudDataset:
    points: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ContractError(f"points must be n x k with k >= 1, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if lab.size != pts.shape[0]:
                raise ContractError("label count must equal point count")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PointCloudDataset):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels))
        return np.array_equal(self.points, other.points) and same_labels


class Protocol(enum.Enum):
    LOO = "loo"
    OCC = "occ"


@dataclass(frozen=True)
class ADTask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray  # 1 = anomaly
    protocol: Protocol
    class_id: int


# ---------------------------------------------------------------- generators


def mixture_centers(modes: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(modes) / modes
    return radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def gen_gaussian_mixture(modes: int, radius: float, sigma: float, n: int, seed: int) -> PointCloudDataset:
    """Isotropic 2-D Gaussians centred evenly on a circle; label = mode index."""
    if modes < 1 or sigma <= 0 or n < modes or radius < 0:
        raise ContractError("need modes >= 1, sigma > 0, n >= modes, radius >= 0")
    rng = make_rng(seed)
    labels = np.arange(n) % modes
    rng.shuffle(labels)
    centers = mixture_centers(modes, radius)
    points = centers[labels] + sigma * rng.standard_normal((n, 2))
    return PointCloudDataset(points, labels, f"mixture{modes}", seed)


def _uniform_annulus(r_in: float, r_out: float, n: int, rng) -> np.ndarray:
    out = np.empty((0, 2))
    while out.shape[0] < n:
        cand = rng.uniform(-r_out, r_out, size=(2 * (n - out.shape[0]) + 16, 2))
        r = np.linalg.norm(cand, axis=1)
        out = np.concatenate([out, cand[(r <= r_out) & (r >= r_in)]])
    return out[:n]


def gen_disk(radius: float, n: int, seed: int) -> PointCloudDataset:
    if radius <= 0 or n < 0:
        raise ContractError("radius must be positive")
    pts = _uniform_annulus(0.0, radius, n, make_rng(seed))
    return PointCloudDataset(pts, None, "disk", seed)


def gen_ring(r_in: float, r_out: float, n: int, seed: int) -> PointCloudDataset:
    if r_in < 0 or r_in >= r_out:
        raise ContractError(f"ring needs 0 <= r_in < r_out, got {r_in}, {r_out}")
    pts = _uniform_annulus(r_in, r_out, n, make_rng(seed))
    return PointCloudDataset(pts, None, "ring", seed)


def grid_points(bounds, resolution) -> np.ndarray:
    """Cartesian grid of equidistant points, endpoints included."""
    bounds = list(bounds)
    if isinstance(resolution, int):
        resolution = [resolution] * len(bounds)
    axes = []
    for (lo, hi), res in zip(bounds, resolution):
        if lo >= hi:
            raise ContractError(f"grid bound lo={lo} must be below hi={hi}")
        if res < 2:
            raise ContractError("grid resolution must be at least 2 per axis")
        axes.append(np.linspace(lo, hi, res))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


# ---------------------------------------------------------- support labels


def support_labels(points: np.ndarray, shape: str, **params) -> np.ndarray:
    """Ground-truth anomaly labels (1 = outside the support) for benchmark shapes.

    ``mixture`` uses 3 sigma balls around each centre; ``disk`` and ``ring``
    use exact region membership.
    """
    r = np.linalg.norm(points, axis=1)
    if shape == "mixture":
        centers = mixture_centers(params["modes"], params["radius"])
        d = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2).min(axis=1)
        normal = d <= 3.0 * params["sigma"]
    elif shape == "disk":
        normal = r <= params["radius"]
    elif shape == "ring":
        normal = (r >= params["r_in"]) & (r <= params["r_out"])
    else:
        raise ContractError(f"unknown support shape {shape!r}")
    return (~normal).astype(np.int64)


# ------------------------------------------------------------- AD tasks


def _split_normals(normal_idx: np.ndarray, fractions, rng):
    f_train, f_val = fractions
    if f_train <= 0 or f_val < 0 or f_train + f_val > 1:
        raise ContractError(f"bad split fractions {fractions}")
    idx = normal_idx.copy()
    rng.shuffle(idx)
    n_train = int(round(f_train * idx.size))
    n_val = int(round(f_val * idx.size))
    return idx[:n_train], idx[n_train:n_train + n_val], idx[n_train + n_val:]


def _build_task(dataset, normal_mask, fractions, seed, protocol, class_id) -> ADTask:
    rng = make_rng(seed)
    tr, va, te_norm = _split_normals(np.flatnonzero(normal_mask), fractions, rng)
    anom = np.flatnonzero(~normal_mask)
    test_idx = np.concatenate([te_norm, anom])
    labels = np.concatenate([np.zeros(te_norm.size, np.int64), np.ones(anom.size, np.int64)])
    order = rng.permutation(test_idx.size)
    pts = dataset.points
    return ADTask(pts[tr], pts[va], pts[test_idx[order]], labels[order], protocol, class_id)


def build_loo_task(dataset: PointCloudDataset, leave_out_class: int, split_fractions=(0.8, 0.1),
                   seed: int = 0) -> ADTask:
    """Leave-one-out: the held-out class is anomalous, every other class normal."""
    if dataset.labels is None or leave_out_class not in set(dataset.labels.tolist()):
        raise ContractError(f"class {leave_out_class} not present in labelled dataset")
    normal = dataset.labels != leave_out_class
    return _build_task(dataset, normal, split_fractions, seed, Protocol.LOO, leave_out_class)


def build_occ_task(dataset: PointCloudDataset, normal_class: int, split_fractions=(0.8, 0.1),
                   seed: int = 0) -> ADTask:
    """One-class: a single class is normal, all others anomalous."""
    if dataset.labels is None or normal_class not in set(dataset.labels.tolist()):
        raise ContractError(f"class {normal_class} not present in labelled dataset")
    normal = dataset.labels == normal_class
    return _build_task(dataset, normal, split_fractions, seed, Protocol.OCC, normal_class)


# ------------------------------------------------------------------ CSV


def save_csv(dataset: PointCloudDataset, path) -> Path:
    path = Path(path)
    header = [f"x{i + 1}" for i in range(dataset.dim)]
    if dataset.labels is not None:
        header.append("label")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(dataset.points):
            cells = [repr(float(v)) for v in row]
            if dataset.labels is not None:
                cells.append(str(int(dataset.labels[i])))
            w.writerow(cells)
    return path


def load_csv(path) -> PointCloudDataset:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        try:
            header = next(rows)
        except StopIteration:
            raise ParseError("missing header row", 1) from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        coords = header[:-1] if has_label else header
        if not coords or coords != [f"x{i + 1}" for i in range(len(coords))]:
            raise ParseError(f"header must be x1,...,xk[,label], got {header}", 1)
        k = len(coords)
        points, labels = [], []
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            try:
                points.append([float(c) for c in row[:k]])
                if has_label:
                    labels.append(int(row[k]))
            except ValueError as exc:
                raise ParseError(f"non-numeric cell ({exc})", lineno) from None
    pts = np.asarray(points, dtype=np.float64).reshape(-1, k)
    return PointCloudDataset(pts, np.asarray(labels, np.int64) if has_label else None, path.stem)


def iter_batches(n: int, batch_size: int, rng):
    """Shuffled index batches covering ``range(n)`` once; last batch may be short."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]

