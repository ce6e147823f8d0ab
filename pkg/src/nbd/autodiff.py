"""Reverse-mode autodiff over numpy arrays, with forward-mode tangents
that are themselves graph nodes.

A :class:`Tensor` records which primitive produced it and how to pull an
output gradient back to its inputs.  A :class:`Dual` pairs two tensors
(primal, tangent); pushing a ``Dual`` through the primitives below builds
the tangent as ordinary graph nodes, so a reverse sweep over a loss that
contains a directional derivative yields exact second-order parameter
gradients (double backpropagation).
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "Tensor",
    "Dual",
    "Tape",
    "UnsupportedPrimitive",
    "record",
    "backward",
    "directional_derivative",
    "parameter_gradients",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "softplus",
    "sigmoid",
    "square",
    "sqrt",
    "dot",
    "matmul",
    "affine",
    "transpose",
    "sum",
    "mean",
    "maximum",
    "take",
    "reshape",
    "concat",
]


class UnsupportedPrimitive(TypeError):
    """Raised when an expression uses an operation the engine cannot record."""


def _np_softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _np_sigmoid(x):
    # two-branch form, no overflow for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    ``parents`` holds ``(node, pullback)`` pairs; ``pullback`` maps the
    gradient of this node to the gradient contribution for ``node``.
    Nodes built only from constants keep no parents.
    """

    __slots__ = ("data", "grad", "parents", "op", "requires_grad", "name")
    __array_priority__ = 100.0

    def __init__(self, data, parents=(), op: str = "const", requires_grad: bool = False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.parents = tuple(parents)
        self.op = op
        self.requires_grad = requires_grad or bool(self.parents)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape})"

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        table = {np.add: add, np.subtract: sub, np.multiply: mul, np.true_divide: div}
        if method == "__call__" and ufunc in table and not kwargs:
            return table[ufunc](*inputs)
        raise UnsupportedPrimitive(f"numpy ufunc {ufunc.__name__!r} is not a supported primitive")

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
        if p == 2:
            return square(self)
        raise UnsupportedPrimitive(f"power {p!r} is not a supported primitive (only square)")

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)


class Dual:
    """Primal/tangent pair for forward-mode differentiation.

    ``tangent`` may be ``None`` for a zero tangent.  Both components are
    usually :class:`Tensor` nodes, so the tangent stays differentiable.
    """

    __slots__ = ("primal", "tangent")

    def __init__(self, primal, tangent=None):
        self.primal = primal
        self.tangent = tangent

    @property
    def shape(self):
        return _data(self.primal).shape

    @property
    def ndim(self):
        return _data(self.primal).ndim

    def __repr__(self):
        return f"Dual(primal={self.primal!r}, tangent={self.tangent!r})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return take(self, idx)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise UnsupportedPrimitive(f"power {p!r} is not a supported primitive (only square)")


def _data(x):
    if isinstance(x, Tensor):
        return x.data
    if isinstance(x, Dual):
        raise TypeError("expected a Tensor or array, got a Dual")
    return np.asarray(x, dtype=np.float64)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (np.ndarray, float, int, np.floating, np.integer)):
        return Tensor(x)
    if isinstance(x, (list, tuple)):
        return Tensor(np.asarray(x, dtype=np.float64))
    raise UnsupportedPrimitive(f"cannot record operand of type {type(x).__name__}")


def _node(data, op, *pairs) -> Tensor:
    """Build an output node, keeping only the parents that need gradients."""
    parents = tuple((p, fn) for p, fn in pairs if p.requires_grad)
    return Tensor(data, parents=parents, op=op)


def _is_dual(*xs) -> bool:
    return any(isinstance(x, Dual) for x in xs)


def _split(x):
    if isinstance(x, Dual):
        return x.primal, x.tangent
    return x, None


def _tadd(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return add(a, b)


# ---------------------------------------------------------------- primitives


def add(a, b):
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        return Dual(add(pa, pb), _tadd(ta, tb))
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, "add", (a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(g, sb)))


def neg(a):
    if isinstance(a, Dual):
        return Dual(neg(a.primal), None if a.tangent is None else neg(a.tangent))
    a = _as_tensor(a)
    return _node(-a.data, "neg", (a, lambda g: -g))


def sub(a, b):
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        if tb is not None:
            tb = neg(tb)
        return Dual(sub(pa, pb), _tadd(ta, tb))
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, "sub", (a, lambda g: _unbroadcast(g, sa)), (b, lambda g: -_unbroadcast(g, sb)))


def mul(a, b):
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        t = _tadd(None if ta is None else mul(ta, pb), None if tb is None else mul(pa, tb))
        return Dual(mul(pa, pb), t)
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    return _node(
        ad * bd,
        "mul",
        (a, lambda g: _unbroadcast(g * bd, sa)),
        (b, lambda g: _unbroadcast(g * ad, sb)),
    )


def div(a, b):
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        out = div(pa, pb)
        t = None if ta is None else div(ta, pb)
        if tb is not None:
            t = _tadd(t, neg(div(mul(out, tb), pb)))
        return Dual(out, t)
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    out = ad / bd
    return _node(
        out,
        "div",
        (a, lambda g: _unbroadcast(g / bd, sa)),
        (b, lambda g: _unbroadcast(-g * out / bd, sb)),
    )


def exp(a):
    if isinstance(a, Dual):
        e = exp(a.primal)
        return Dual(e, None if a.tangent is None else mul(a.tangent, e))
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _node(out, "exp", (a, lambda g: g * out))


def log(a):
    if isinstance(a, Dual):
        return Dual(log(a.primal), None if a.tangent is None else div(a.tangent, a.primal))
    a = _as_tensor(a)
    ad = a.data
    return _node(np.log(ad), "log", (a, lambda g: g / ad))


def sigmoid(a):
    if isinstance(a, Dual):
        s = sigmoid(a.primal)
        if a.tangent is None:
            return Dual(s, None)
        return Dual(s, mul(a.tangent, mul(s, sub(1.0, s))))
    a = _as_tensor(a)
    s = _np_sigmoid(np.atleast_1d(a.data)).reshape(a.shape)
    return _node(s, "sigmoid", (a, lambda g: g * s * (1.0 - s)))


def softplus(a):
    if isinstance(a, Dual):
        if a.tangent is None:
            return Dual(softplus(a.primal), None)
        return Dual(softplus(a.primal), mul(a.tangent, sigmoid(a.primal)))
    a = _as_tensor(a)
    ad = a.data
    s = _np_sigmoid(np.atleast_1d(ad)).reshape(ad.shape)
    return _node(_np_softplus(ad), "softplus", (a, lambda g: g * s))


def square(a):
    if isinstance(a, Dual):
        t = None if a.tangent is None else mul(mul(2.0, a.primal), a.tangent)
        return Dual(square(a.primal), t)
    a = _as_tensor(a)
    ad = a.data
    return _node(ad * ad, "square", (a, lambda g: 2.0 * g * ad))


def sqrt(a):
    if isinstance(a, Dual):
        r = sqrt(a.primal)
        return Dual(r, None if a.tangent is None else div(a.tangent, mul(2.0, r)))
    a = _as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, "sqrt", (a, lambda g: g / (2.0 * out)))


def dot(a, b):
    """Inner product over the last axis (batched over leading axes)."""
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        t = _tadd(None if ta is None else dot(ta, pb), None if tb is None else dot(pa, tb))
        return Dual(dot(pa, pb), t)
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1:] != b.shape[-1:]:
        raise ValueError(f"dot: last dimensions differ, {a.shape} vs {b.shape}")
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    return _node(
        np.sum(ad * bd, axis=-1),
        "dot",
        (a, lambda g: _unbroadcast(np.expand_dims(g, -1) * bd, sa)),
        (b, lambda g: _unbroadcast(np.expand_dims(g, -1) * ad, sb)),
    )


def matmul(a, b):
    if _is_dual(a, b):
        (pa, ta), (pb, tb) = _split(a), _split(b)
        t = _tadd(None if ta is None else matmul(ta, pb), None if tb is None else matmul(pa, tb))
        return Dual(matmul(pa, pb), t)
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise UnsupportedPrimitive("matmul supports 1-D and 2-D operands only")
    if ad.shape[-1] != bd.shape[0]:
        raise ValueError(f"matmul: shapes {ad.shape} and {bd.shape} not aligned")

    def grad_a(g):
        if bd.ndim == 1:
            return np.multiply.outer(g, bd) if ad.ndim == 2 else g * bd
        return g @ bd.T

    def grad_b(g):
        if ad.ndim == 1:
            return np.multiply.outer(ad, g) if bd.ndim == 2 else g * ad
        if bd.ndim == 1:
            return ad.T @ g
        return ad.T @ g

    return _node(ad @ bd, "matmul", (a, grad_a), (b, grad_b))


def transpose(a):
    if isinstance(a, Dual):
        return Dual(transpose(a.primal), None if a.tangent is None else transpose(a.tangent))
    a = _as_tensor(a)
    return _node(a.data.T, "transpose", (a, lambda g: g.T))


def affine(x, weight, bias=None):
    """``x @ weight.T + bias``; ``x`` is a vector or a batch of row vectors."""
    if weight.shape[-1] != x.shape[-1]:
        raise ValueError(f"affine: input dim {x.shape[-1]} does not match weight {weight.shape}")
    out = matmul(x, transpose(weight))
    return out if bias is None else add(out, bias)


def sum(a, axis=None):  # noqa: A001
    if isinstance(a, Dual):
        return Dual(sum(a.primal, axis), None if a.tangent is None else sum(a.tangent, axis))
    a = _as_tensor(a)
    shape = a.shape

    def pull(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _node(np.sum(a.data, axis=axis), "sum", (a, pull))


def mean(a, axis=None):
    shape = np.shape(_data(a.primal if isinstance(a, Dual) else a))
    n = int(np.prod(shape)) if axis is None else shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def maximum(a, c: float):
    """Elementwise ``max(a, c)`` against a constant ``c`` (subgradient 0 at ties)."""
    if not np.isscalar(c):
        raise UnsupportedPrimitive("maximum is only defined against a scalar constant")
    if isinstance(a, Dual):
        mask = (_data(a.primal) > c).astype(np.float64)
        return Dual(maximum(a.primal, c), None if a.tangent is None else mul(a.tangent, mask))
    a = _as_tensor(a)
    ad = a.data
    mask = ad > c
    return _node(np.where(mask, ad, c), "maximum", (a, lambda g: g * mask))


def take(a, index):
    """Select along the leading axis (integer array, slice, or int)."""
    if isinstance(a, Dual):
        return Dual(take(a.primal, index), None if a.tangent is None else take(a.tangent, index))
    a = _as_tensor(a)
    shape = a.shape

    def pull(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return out

    return _node(a.data[index], "take", (a, pull))


def reshape(a, shape):
    if isinstance(a, Dual):
        return Dual(reshape(a.primal, shape), None if a.tangent is None else reshape(a.tangent, shape))
    a = _as_tensor(a)
    orig = a.shape
    return _node(a.data.reshape(shape), "reshape", (a, lambda g: g.reshape(orig)))


def concat(parts: Iterable, axis: int = 0):
    parts = list(parts)
    if _is_dual(*parts):
        split = [_split(p) for p in parts]
        prim = concat([p for p, _ in split], axis)
        if all(t is None for _, t in split):
            return Dual(prim, None)
        tans = [t if t is not None else Tensor(np.zeros_like(_data(p))) for p, t in split]
        return Dual(prim, concat(tans, axis))
    tensors = [_as_tensor(p) for p in parts]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def puller(i):
        return lambda g: np.split(g, sizes, axis=axis)[i]

    return _node(
        np.concatenate([t.data for t in tensors], axis=axis),
        "concat",
        *[(t, puller(i)) for i, t in enumerate(tensors)],
    )


# ------------------------------------------------------------------ sweeps


def _toposort(root: Tensor) -> list[Tensor]:
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
        for parent, _ in reversed(node.parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Tensor) -> dict[Tensor, np.ndarray]:
    """Accumulate d(root)/d(node) into ``node.grad`` for every ancestor.

    Returns a map from each leaf that requires gradients to its gradient.
    """
    if not isinstance(root, Tensor):
        raise TypeError(f"backward expects a Tensor, got {type(root).__name__}")
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, pull in node.parents:
            contrib = pull(g)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
    return {n: n.grad for n in order if not n.parents and n.requires_grad}


def record(fn: Callable, *inputs) -> tuple[Tensor, list[Tensor]]:
    """Evaluate ``fn`` on fresh leaf tensors built from ``inputs``.

    Returns the root node and the leaves, in input order.
    """
    leaves = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True, name=f"x{i}") for i, x in enumerate(inputs)]
    root = fn(*leaves)
    if isinstance(root, Dual):
        raise TypeError("record: expression returned a Dual; take .primal or .tangent")
    return _as_tensor(root), leaves


def directional_derivative(f: Callable, point, direction):
    """``<grad f(point), direction>`` from one tangent-carrying evaluation of ``f``.

    ``point`` and ``direction`` may be graph nodes, in which case the
    result is differentiable with respect to them and to anything ``f``
    closes over.  Batched inputs (rows) give one value per row.
    """
    if isinstance(point, Dual) or isinstance(direction, Dual):
        raise TypeError("directional_derivative: nested tangents are not supported")
    p_shape, d_shape = np.shape(_data(point)), np.shape(_data(direction))
    if p_shape != d_shape:
        raise ValueError(f"point {p_shape} and direction {d_shape} differ in shape")
    out = f(Dual(_as_tensor(point), _as_tensor(direction)))
    if not isinstance(out, Dual):
        return Tensor(np.zeros(np.shape(_data(out))))
    if out.tangent is None:
        return Tensor(np.zeros(np.shape(_data(out.primal))))
    return out.tangent


def parameter_gradients(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to named leaf parameters.

    Parameters the loss does not depend on get a zero gradient.
    """
    for name, p in params.items():
        if not isinstance(p, Tensor) or p.parents or not p.requires_grad:
            raise ValueError(f"parameter {name!r} is not a registered leaf on the tape")
    for p in params.values():
        p.grad = None
    backward(loss)
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}


class Tape:
    """Per-step registry of parameter leaves.

    One tape serves one forward/backward step; build a new one per step.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}

    def param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already on tape")
        leaf = Tensor(value, requires_grad=True, name=name)
        self.params[name] = leaf
        return leaf

    def gradients(self, loss: Tensor) -> dict[str, np.ndarray]:
        return parameter_gradients(loss, self.params)
