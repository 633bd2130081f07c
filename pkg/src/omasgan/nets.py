"""Dense MLPs for the six networks, plus their on-disk checkpoint format.

Parameters live in one flat float64 vector (:class:`ParamSet`).  During
training the vector is wrapped in a single leaf :class:`~omasgan.autodiff.Tensor`
so one backward pass yields one flat gradient.

Checkpoint layout (little-endian)::

    b"OMAS1" | u16 version | u32 fingerprint length | fingerprint (utf-8)
    | u64 count | count x float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import (
    BadMagicError,
    ContractError,
    CorruptCheckpointError,
    NumericOverflowError,
    ShapeError,
    SpecMismatchError,
    VersionError,
)

HIDDEN_ACTIVATIONS = ("leaky_relu", "tanh")
OUTPUT_TRANSFORMS = ("identity", "sigmoid")

MAGIC = b"OMAS1"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple[int, ...]
    hidden: str = "leaky_relu"
    output: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ContractError("an MLP needs input, output and at least one hidden layer")
        if any(w <= 0 for w in self.widths):
            raise ContractError(f"layer widths must be positive: {self.widths}")
        if self.hidden not in HIDDEN_ACTIVATIONS:
            raise ContractError(f"unknown hidden activation {self.hidden!r}")
        if self.output not in OUTPUT_TRANSFORMS:
            raise ContractError(f"unknown output transform {self.output!r}")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @property
    def manifest(self) -> list[tuple[int, ...]]:
        shapes = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.manifest)

    @property
    def fingerprint(self) -> str:
        return f"mlp:{'-'.join(map(str, self.widths))}:{self.hidden}:{self.output}"

    @classmethod
    def from_fingerprint(cls, fp: str) -> "MlpSpec":
        try:
            kind, widths, hidden, output = fp.split(":")
            if kind != "mlp":
                raise ValueError(kind)
            return cls(tuple(int(w) for w in widths.split("-")), hidden, output)
        except (ValueError, ContractError):
            raise SpecMismatchError(f"unrecognised spec fingerprint {fp!r}") from None


def generator_spec(latent_dim: int = 2, data_dim: int = 2, hidden: int = 64) -> MlpSpec:
    return MlpSpec((latent_dim, hidden, hidden, data_dim))


def critic_spec(data_dim: int = 2, hidden: int = 64) -> MlpSpec:
    return MlpSpec((data_dim, hidden, hidden, 1))


@dataclass
class ParamSet:
    spec: MlpSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.spec.n_params:
            raise ShapeError("ParamSet", [(self.values.size,), (self.spec.n_params,)],
                             "parameter count does not match manifest")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("parameters must be finite")

    @property
    def fingerprint(self) -> str:
        return self.spec.fingerprint

    def copy(self) -> "ParamSet":
        return ParamSet(self.spec, self.values.copy())

    def layers(self):
        """Yield (weight, bias) ndarray views."""
        off = 0
        for shape in self.spec.manifest:
            size = int(np.prod(shape))
            yield self.values[off:off + size].reshape(shape)
            off += size


def init(spec: MlpSpec, seed: int) -> ParamSet:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    rng = np.random.Generator(np.random.Philox(seed))
    chunks = []
    for shape in spec.manifest:
        if len(shape) == 2:
            bound = np.sqrt(6.0 / shape[0])
            chunks.append(rng.uniform(-bound, bound, size=shape).reshape(-1))
        else:
            chunks.append(np.zeros(shape))
    return ParamSet(spec, np.concatenate(chunks))


def forward(spec: MlpSpec, params, batch) -> ad.Tensor:
    """Evaluate the MLP on an ``n x in_dim`` batch.

    ``params`` may be a :class:`ParamSet` (treated as constant) or a flat
    :class:`~omasgan.autodiff.Tensor` whose gradient is wanted.
    """
    if isinstance(params, ParamSet):
        if params.spec != spec:
            raise SpecMismatchError(f"params for {params.fingerprint}, spec is {spec.fingerprint}")
        params = ad.Tensor(params.values)
    x = ad.as_tensor(batch)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ShapeError("mlp forward", [x.shape, (None, spec.in_dim)], "batch width mismatch")
    if params.shape != (spec.n_params,):
        raise ShapeError("mlp forward", [params.shape, (spec.n_params,)], "flat parameter length")

    manifest = spec.manifest
    n_layers = len(manifest) // 2
    off = 0
    h = x
    for layer in range(n_layers):
        w_shape, b_shape = manifest[2 * layer], manifest[2 * layer + 1]
        w_size = w_shape[0] * w_shape[1]
        w = ad.reshape(params[off:off + w_size], w_shape)
        off += w_size
        b = params[off:off + b_shape[0]]
        off += b_shape[0]
        h = h @ w + b
        if layer < n_layers - 1:
            h = ad.leaky_relu(h) if spec.hidden == "leaky_relu" else ad.tanh(h)
    if spec.output == "sigmoid":
        h = ad.sigmoid(h)
    return h


def evaluate(params: ParamSet, batch) -> np.ndarray:
    """Forward pass returning a plain ndarray (no gradient wanted).

    Uses ``einsum`` rather than BLAS so each output row is bit-identical
    whether the row is scored alone or inside a larger batch.
    """
    spec = params.spec
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ShapeError("mlp forward", [x.shape, (None, spec.in_dim)], "batch width mismatch")
    h = x
    layers = list(params.layers())
    n_layers = len(layers) // 2
    for layer in range(n_layers):
        h = np.einsum("ij,jk->ik", h, layers[2 * layer]) + layers[2 * layer + 1]
        if layer < n_layers - 1:
            h = h * np.where(h > 0, 1.0, ad.LEAKY_SLOPE) if spec.hidden == "leaky_relu" else np.tanh(h)
    if spec.output == "sigmoid":
        h = ad._sigmoid(h)
    if not np.all(np.isfinite(h)):
        raise NumericOverflowError("mlp forward", "non-finite network output")
    return h


# -------------------------------------------------------------- checkpoints


def save_checkpoint(params: ParamSet, path) -> Path:
    path = Path(path)
    fp = params.fingerprint.encode("utf-8")
    payload = params.values.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(fp)))
        fh.write(fp)
        fh.write(struct.pack("<Q", payload.size))
        fh.write(payload.tobytes())
    return path


def load_checkpoint(path, spec: MlpSpec | None = None) -> ParamSet:
    """Read a checkpoint; if ``spec`` is given its fingerprint must match."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC):
        raise CorruptCheckpointError(f"{path}: file too short")
    if data[:5] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:5]!r}")
    off = 5
    try:
        version, fp_len = struct.unpack_from("<HI", data, off)
        off += 6
        if version != FORMAT_VERSION:
            raise VersionError(f"{path}: unsupported checkpoint version {version}")
        fp = data[off:off + fp_len]
        if len(fp) != fp_len:
            raise CorruptCheckpointError(f"{path}: truncated fingerprint")
        off += fp_len
        (count,) = struct.unpack_from("<Q", data, off)
        off += 8
    except struct.error:
        raise CorruptCheckpointError(f"{path}: truncated header") from None
    body = data[off:]
    if len(body) != 4 * count:
        raise CorruptCheckpointError(f"{path}: expected {count} floats, found {len(body) / 4:g}")
    fingerprint = fp.decode("utf-8", errors="replace")
    if spec is not None and fingerprint != spec.fingerprint:
        raise SpecMismatchError(f"{path}: checkpoint is {fingerprint}, expected {spec.fingerprint}")
    stored_spec = spec or MlpSpec.from_fingerprint(fingerprint)
    values = np.frombuffer(body, dtype="<f4").astype(np.float64)
    if values.size != stored_spec.n_params:
        raise CorruptCheckpointError(f"{path}: parameter count does not match {fingerprint}")
    return ParamSet(stored_spec, values)
