"""Reverse-mode automatic differentiation over dense float64 arrays.

Every operation returns a new :class:`Tensor` that remembers its inputs and
a closure computing the vector-Jacobian product.  There is no global graph:
the graph is exactly the set of tensors reachable from the root passed to
:func:`backward`.

    >>> x = Tensor(3.0)
    >>> grads = backward(square(x))
    >>> float(grads[x])
    6.0
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericOverflowError, ShapeError

LEAKY_SLOPE = 0.2


class Tensor:
    """A node of the computation graph.

    ``value`` is always a float64 ndarray.  Leaves have no parents.
    """

    __slots__ = ("value", "parents", "op", "_vjp", "__weakref__")

    def __init__(self, value, parents: tuple = (), op: str = "leaf", vjp=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.op = op
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def numpy(self):
        return self.value

    def item(self):
        return float(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: subtract(self, o)
    __rsub__ = lambda self, o: subtract(o, self)
    __mul__ = lambda self, o: multiply(self, o)
    __rmul__ = lambda self, o: multiply(o, self)
    __truediv__ = lambda self, o: divide(self, o)
    __rtruediv__ = lambda self, o: divide(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __neg__ = lambda self: negate(self)

    def __getitem__(self, index):
        return take(self, index)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op: str, value, parents: tuple, vjp: Callable) -> Tensor:
    value = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(value)):
        raise NumericOverflowError(op)
    return Tensor(value, parents, op, vjp)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, [a.shape, b.shape]) from None


# ---------------------------------------------------------------- binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make("add", a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("subtract", a, b)
    return _make("subtract", a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def multiply(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("multiply", a, b)
    av, bv = a.value, b.value
    return _make("multiply", av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def divide(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("divide", a, b)
    av, bv = a.value, b.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv

    def vjp(g):
        return (_unbroadcast(g / bv, a.shape), _unbroadcast(-g * av / (bv * bv), b.shape))

    return _make("divide", out, (a, b), vjp)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape])
    av, bv = a.value, b.value
    return _make("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def maximum(a, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)`` for a constant floor; zero gradient where clamped."""
    a = as_tensor(a)
    mask = a.value >= floor
    return _make("maximum", np.where(mask, a.value, floor), (a,), lambda g: (g * mask,))


def clip(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    mask = (a.value >= lo) & (a.value <= hi)
    return _make("clip", np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,))


# ----------------------------------------------------------------- unary ops


def negate(a) -> Tensor:
    a = as_tensor(a)
    return _make("negate", -a.value, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return _make("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _make("log", out, (a,), lambda g: (g / av,))


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _make("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    """``log(1 + exp(a))`` evaluated without overflow."""
    a = as_tensor(a)
    av = a.value
    return _make("softplus", np.logaddexp(0.0, av), (a,), lambda g: (g * _sigmoid(av),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _make("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = as_tensor(a)
    d = np.where(a.value > 0, 1.0, slope)
    return _make("leaky_relu", a.value * d, (a,), lambda g: (g * d,))


def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _make("square", av * av, (a,), lambda g: (2.0 * g * av,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.value)
    with np.errstate(divide="ignore", invalid="ignore"):
        local = 0.5 / out

    def vjp(g):
        gl = g * local
        if not np.all(np.isfinite(gl)):
            raise NumericOverflowError("sqrt (gradient at zero)")
        return (gl,)

    return _make("sqrt", out, (a,), vjp)


# ------------------------------------------------------------ reduction ops


def _norm_axis(axis, ndim):
    if axis is None:
        return None
    if not -ndim <= axis < ndim:
        raise ShapeError("reduce", [()], f"axis {axis} out of range for ndim {ndim}")
    return axis % ndim


def sum(a, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make("sum", a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis: int | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[_norm_axis(axis, a.ndim)]
    if count == 0:
        raise ContractError("mean of empty tensor")
    return multiply(sum(a, axis, keepdims), 1.0 / count)


def norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis``. Gradient is taken as zero at the origin."""
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    av = a.value
    out = np.sqrt(np.sum(av * av, axis=axis, keepdims=True))

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            local = np.where(out > 0, av / out, 0.0)
        return (g * local,)

    value = out if keepdims else np.squeeze(out, axis)
    return _make("norm", value, (a,), vjp)


def min(a, axis: int = -1, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Minimum along ``axis``; the gradient flows to the first argmin."""
    a = as_tensor(a)
    axis = _norm_axis(axis, a.ndim)
    if a.shape[axis] == 0:
        raise ContractError("min over empty axis")
    idx = np.expand_dims(np.argmin(a.value, axis=axis), axis)
    out = np.take_along_axis(a.value, idx, axis)
    shape = a.shape

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros(shape)
        np.put_along_axis(full, idx, g, axis)
        return (full,)

    value = out if keepdims else np.squeeze(out, axis)
    return _make("min", value, (a,), vjp)


# --------------------------------------------------------------- structure


def concat(items: Sequence, axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    if not items:
        raise ContractError("concat of nothing")
    try:
        out = np.concatenate([t.value for t in items], axis=axis)
    except ValueError:
        raise ShapeError("concat", [t.shape for t in items]) from None
    splits = np.cumsum([t.shape[axis] for t in items])[:-1]
    return _make("concat", out, tuple(items), lambda g: tuple(np.split(g, splits, axis=axis)))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.value, shape)
    except ValueError:
        raise ShapeError("broadcast", [a.shape, shape]) from None
    return _make("broadcast", out.copy(), (a,), lambda g: (_unbroadcast(g, a.shape),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [a.shape, shape]) from None
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def take(a, index) -> Tensor:
    a = as_tensor(a)
    out = a.value[index]

    def vjp(g):
        full = np.zeros(a.shape)
        np.add.at(full, index, g)
        return (full,)

    return _make("take", out, (a,), vjp)


# ---------------------------------------------------------------- backward


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> dict:
    """Gradient of scalar ``root`` with respect to every reachable node.

    Returns a dict keyed by the :class:`Tensor` objects themselves.  Gradients
    are accumulated in reverse topological order, so a fixed graph always
    yields bit-identical results.
    """
    if root.value.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    order = _topological(root)
    grads = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        for parent, pg in zip(node.parents, node._vjp(g)):
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    nodes = {id(n): n for n in order}
    return {nodes[k]: g for k, g in grads.items()}


def grad(f: Callable[[Tensor], Tensor], x) -> np.ndarray:
    """Gradient of scalar function ``f`` at ``x``."""
    leaf = Tensor(np.array(x, dtype=np.float64))
    return backward(f(leaf))[leaf]


def finite_difference_gradient(f: Callable[[np.ndarray], float], params, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    p = np.array(params, dtype=np.float64)
    out = np.zeros_like(p)
    flat, gflat = p.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(p))
        flat[i] = orig - eps
        fm = float(f(p))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return out
