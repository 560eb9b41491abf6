"""Minimal reverse-mode automatic differentiation over numpy float64 arrays.

A :class:`Tensor` wraps an immutable ``np.ndarray``. Operations record their
parents and a vector-Jacobian closure; :func:`grad` walks the graph once in
reverse topological order. Nodes never store adjoints, so a graph can be
differentiated any number of times and parameters never need zeroing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

LEAKY_SLOPE = 0.2


class NonFiniteError(FloatingPointError):
    """Raised when NaN or Inf shows up in a forward value or an adjoint."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(a: np.ndarray, where: str) -> None:
    # a finite sum means every entry is finite; only overflowed sums need the full scan
    if not np.isfinite(np.add.reduce(a, axis=None)) and not np.isfinite(a).all():
        raise NonFiniteError(f"non-finite values produced by {where}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    ndim_extra = g.ndim - len(shape)
    if ndim_extra > 0:
        g = g.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "vjp", "op")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, parents=(), vjp=None, op: str = "leaf"):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.parents: tuple[Tensor, ...] = parents
        self.vjp: Callable[[np.ndarray], tuple] | None = vjp
        self.op = op

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)


def tensor(x, requires_grad: bool = False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)


def param(x) -> Tensor:
    """Trainable leaf holding a private copy of ``x``."""
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def custom_op(data: np.ndarray, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    """Graph node with a hand-written vector-Jacobian product returning one adjoint per parent."""
    return _node(np.asarray(data, dtype=np.float64), parents, vjp, op)


def _node(data: np.ndarray, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    _check_finite(data, op)
    rg = any(p.requires_grad for p in parents)
    if not rg:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, parents=tuple(parents), vjp=vjp, op=op)


# elementwise binary ops ------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    return _node(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p: float) -> Tensor:
    a = tensor(a)
    ad = a.data
    return _node(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),), f"pow{p}")


def square(a) -> Tensor:
    a = tensor(a)
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    ad, bd = a.data, b.data

    def vjp(g):
        if bd.ndim == 1:
            ga = np.outer(g, bd) if ad.ndim == 2 else g * bd
            gb = ad.T @ g if ad.ndim == 2 else g * ad
            return ga, gb
        ga = g @ bd.T
        gb = np.outer(ad, g) if ad.ndim == 1 else ad.T @ g
        return ga, gb

    return _node(ad @ bd, (a, b), vjp, "matmul")


# elementwise unary ops --------------------------------------------------------


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = tensor(a)
    ad = a.data
    if (ad <= 0).any():
        raise NonFiniteError("log of non-positive value")
    return _node(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus_np(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(a) -> Tensor:
    a = tensor(a)
    out = sigmoid_np(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + e^a), stable for large |a|."""
    a = tensor(a)
    ad = a.data
    return _node(softplus_np(ad), (a,), lambda g: (g * sigmoid_np(ad),), "softplus")


def tanh(a) -> Tensor:
    a = tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def leaky_relu(a, slope: float = LEAKY_SLOPE) -> Tensor:
    a = tensor(a)
    d = np.where(a.data > 0, 1.0, slope)
    return _node(a.data * d, (a,), lambda g: (g * d,), "lrelu")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; the adjoint is zero wherever the clamp is active."""
    a = tensor(a)
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _node(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,), "clip")


def stop_gradient(a) -> Tensor:
    """Same value, no path back to the parents."""
    a = tensor(a)
    return Tensor(a.data, op="stop_gradient")


# reductions and shape ops -------------------------------------------------------


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _node(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    ad = a.data
    m = np.max(ad, axis=axis, keepdims=True)
    s = np.sum(np.exp(ad - m), axis=axis, keepdims=True)
    out = m + np.log(s)
    soft = np.exp(ad - m) / s
    if keepdims:
        return _node(out, (a,), lambda g: (g * soft,), "logsumexp")
    return _node(out.squeeze(axis), (a,), lambda g: (np.expand_dims(g, axis) * soft,), "logsumexp")


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a) -> Tensor:
    a = tensor(a)
    return _node(a.data.T, (a,), lambda g: (g.T,), "transpose")


def getitem(a, idx) -> Tensor:
    a = tensor(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), vjp, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _node(
        np.concatenate([t.data for t in ts], axis=axis),
        ts,
        lambda g: tuple(np.split(g, sizes, axis=axis)),
        "concat",
    )


# backward ------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Exact reverse-mode derivatives of a scalar ``output`` w.r.t. ``wrt``.

    Leaves that the output does not depend on get a zero gradient.
    """
    if output.data.size != 1:
        raise ValueError(f"grad needs a scalar output, got shape {output.shape}")
    adj: dict[int, np.ndarray] = {}
    if output.requires_grad:
        adj[id(output)] = np.ones_like(output.data)
        for node in reversed(_topo_order(output)):
            g = adj.get(id(node))
            if g is None or node.vjp is None:
                continue
            for p, gp in zip(node.parents, node.vjp(g)):
                if not p.requires_grad or gp is None:
                    continue
                _check_finite(gp, f"backward of {node.op}")
                prev = adj.get(id(p))
                adj[id(p)] = gp if prev is None else prev + gp
    return [adj.get(id(w), np.zeros_like(w.data)) for w in wrt]


def value_and_grad(output: Tensor, params: Mapping[str, Tensor]) -> tuple[float, dict[str, np.ndarray]]:
    names = list(params)
    gs = grad(output, [params[k] for k in names])
    return float(output.data), dict(zip(names, gs))


# optimizer --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update; replaces each ``param.data`` with a new array."""
    for k, p in params.items():
        if grads[k].shape != p.shape:
            raise ValueError(f"gradient shape {grads[k].shape} does not match parameter {k} {p.shape}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for k, p in params.items():
        g = grads[k]
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p.data)
            v = state.v[k] = np.zeros_like(p.data)
        else:
            v = state.v[k]
        # moments are owned by the optimizer, so they are updated in place
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        p.data = p.data - (state.lr / bc1) * m / denom
