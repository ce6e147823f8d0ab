"""Bregman divergences from closed-form or learned generating functions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .encoder import EncoderParams, encode
from .icnn import IcnnParams, phi_and_grad, phi_forward

VARIANTS = ("plain", "sqrt", "gsb")
SQRT_EPS = 1e-12
DOMAIN_FLOOR = 1e-12
GENERATOR_KINDS = ("sq-euclidean", "mahalanobis", "xlogx", "shifted-xlogx", "kl-positive")


class DomainError(ValueError):
    """An input lies outside the generator's domain."""


@dataclass(frozen=True)
class GeneratorFn:
    """A convex generator with its input gradient.

    ``fn`` and ``grad`` map row vectors to values and gradient rows; both
    accept arrays and graph nodes (``fn`` also tangent pairs).
    ``domain_shift`` is set for log-based generators: every entry must
    satisfy ``x + domain_shift > 1e-12``.
    """

    name: str
    fn: Callable
    grad: Callable
    domain_shift: float | None = None
    value_and_grad: Callable | None = None

    def __call__(self, x):
        return self.fn(x)

    def both(self, x):
        if self.value_and_grad is not None:
            return self.value_and_grad(x)
        return self.fn(x), self.grad(x)

    def check(self, x) -> None:
        if self.domain_shift is None:
            return
        arr = ad._data(x.primal if isinstance(x, ad.Dual) else x)
        if np.any(arr + self.domain_shift <= DOMAIN_FLOOR):
            raise DomainError(f"{self.name}: inputs must satisfy x > {DOMAIN_FLOOR - self.domain_shift:g}")


def _rowsum(x):
    return ad.sum(x, axis=-1)


def closed_form_generator(kind: str, matrix=None) -> GeneratorFn:
    """Reference generators with analytic gradients.

    ``mahalanobis`` needs a symmetric positive definite ``matrix``.
    ``kl-positive`` is ``<x, log x>``; on the simplex its divergence is KL.
    """
    if kind == "sq-euclidean":
        return GeneratorFn(kind, lambda x: _rowsum(ad.square(x)), lambda x: ad.mul(2.0, x))
    if kind == "mahalanobis":
        if matrix is None:
            raise ValueError("mahalanobis generator needs a matrix")
        a = np.asarray(matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ValueError("mahalanobis matrix must be square and symmetric")
        try:
            np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise ValueError("mahalanobis matrix must be positive definite") from exc
        return GeneratorFn(
            kind,
            lambda x: ad.dot(ad.matmul(x, a), x),
            lambda x: ad.mul(2.0, ad.matmul(x, a)),
        )
    if kind in ("xlogx", "kl-positive"):
        return GeneratorFn(
            kind,
            lambda x: _rowsum(ad.mul(x, ad.log(x))),
            lambda x: ad.add(1.0, ad.log(x)),
            domain_shift=0.0,
        )
    if kind == "shifted-xlogx":
        def fn(x):
            s = ad.add(x, 1.0)
            return _rowsum(ad.mul(s, ad.log(s)))

        return GeneratorFn(kind, fn, lambda x: ad.add(1.0, ad.log(ad.add(x, 1.0))), domain_shift=1.0)
    raise ValueError(f"unknown generator kind {kind!r}; expected one of {GENERATOR_KINDS}")


def icnn_generator(params: IcnnParams) -> GeneratorFn:
    return GeneratorFn(
        "icnn",
        lambda x: phi_forward(params, x),
        lambda x: phi_and_grad(params, x)[1],
        value_and_grad=lambda x: phi_and_grad(params, x),
    )


def _promote(x):
    """Scalars become 1-vectors; returns (tensor, was_scalar)."""
    t = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    if t.ndim == 0:
        return ad.reshape(t, (1,)), True
    return t, False


def bregman(gen: GeneratorFn, x, y):
    """phi(x) - phi(y) - <grad phi(y), x - y>, row-wise.

    The inner product is the tangent of one forward pass of phi at ``y``
    along ``x - y``; that pass also supplies phi(y).
    """
    x, scalar = _promote(x)
    y, _ = _promote(y)
    if x.shape != y.shape:
        raise ValueError(f"bregman: shapes differ, {x.shape} vs {y.shape}")
    gen.check(x)
    gen.check(y)
    out = gen(ad.Dual(y, ad.sub(x, y)))
    value = ad.sub(ad.sub(gen(x), out.primal), out.tangent)
    return ad.reshape(value, ()) if scalar else value


def bregman_pairwise(gen: GeneratorFn, xs, ys):
    """All-pairs divergences ``D[i, j] = D(xs[i], ys[j])``.

    Uses phi on each row once and grad phi on ``ys`` once, so the cost is
    two batched network passes plus one matrix product.
    """
    xs = xs if isinstance(xs, ad.Tensor) else ad.Tensor(xs)
    ys = ys if isinstance(ys, ad.Tensor) else ad.Tensor(ys)
    if xs.ndim != 2 or ys.ndim != 2 or xs.shape[1] != ys.shape[1]:
        raise ValueError(f"bregman_pairwise: need (n, d) and (m, d), got {xs.shape} and {ys.shape}")
    gen.check(xs)
    gen.check(ys)
    phi_x = gen(xs)
    phi_y, grad_y = gen.both(ys)
    n, m = xs.shape[0], ys.shape[0]
    cross = ad.matmul(xs, ad.transpose(grad_y))
    at_y = ad.dot(grad_y, ys)
    lhs = ad.sub(ad.reshape(phi_x, (n, 1)), ad.reshape(phi_y, (1, m)))
    return ad.sub(lhs, ad.sub(cross, ad.reshape(at_y, (1, m))))


def gsb_squared(gen: GeneratorFn, x, y):
    """D(x,y) + D(y,x) + |x-y|^2/2 + |grad(x)-grad(y)|^2/2, row-wise.

    The first two terms are summed as <grad(x) - grad(y), x - y>, which is
    the same quantity written so that swapping x and y gives bit-identical
    results.
    """
    dx = ad.sub(x, y)
    dg = ad.sub(gen.grad(x), gen.grad(y))
    sym = ad.dot(dg, dx)
    return ad.add(ad.add(sym, ad.mul(0.5, _rowsum(ad.square(dx)))), ad.mul(0.5, _rowsum(ad.square(dg))))


@dataclass
class DivergenceModel:
    """Encoder (optional) + generator + output variant.

    ``phi`` is either trainable :class:`IcnnParams` or a fixed
    :class:`GeneratorFn`.  With ``encoder=None`` inputs are used as-is.
    """

    phi: IcnnParams | GeneratorFn
    encoder: EncoderParams | None = None
    variant: str = "plain"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "gsb" and not isinstance(self.phi, IcnnParams):
            raise ValueError("the gsb variant is only defined for a learned ICNN generator")

    @property
    def input_dim(self) -> int | None:
        if self.encoder is not None:
            return self.encoder.config.input_dim
        if isinstance(self.phi, IcnnParams):
            return self.phi.config.input_dim
        return None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        if isinstance(self.phi, IcnnParams):
            out.update(self.phi.arrays())
        if self.encoder is not None:
            out.update(self.encoder.arrays())
        return out

    def bind(self, tape: ad.Tape | None = None) -> "BoundDivergence":
        phi = self.phi.bind(tape) if isinstance(self.phi, IcnnParams) else self.phi
        gen = icnn_generator(phi) if isinstance(phi, IcnnParams) else phi
        enc = self.encoder.bind(tape) if self.encoder is not None else None
        return BoundDivergence(gen, enc, self.variant)


@dataclass
class BoundDivergence:
    """A model whose parameters are fixed arrays or leaves on one tape."""

    generator: GeneratorFn
    encoder: EncoderParams | None
    variant: str

    def embed(self, a):
        a = a if isinstance(a, ad.Tensor) else ad.Tensor(a)
        return a if self.encoder is None else encode(self.encoder, a)

    def divergence(self, a, b):
        """Row-wise divergence between raw inputs ``a`` and ``b``."""
        if np.shape(ad._data(a)) != np.shape(ad._data(b)):
            raise ValueError(f"divergence: shapes differ, {np.shape(ad._data(a))} vs {np.shape(ad._data(b))}")
        x, y = self.embed(a), self.embed(b)
        if self.variant == "gsb":
            return ad.sqrt(ad.add(gsb_squared(self.generator, x, y), SQRT_EPS))
        d = bregman(self.generator, x, y)
        if self.variant == "sqrt":
            return ad.sqrt(ad.add(d, SQRT_EPS))
        return d

    def pairwise(self, a, b):
        """``D[i, j]`` between rows of ``a`` and ``b`` (raw inputs)."""
        x, y = self.embed(a), self.embed(b)
        if self.variant == "gsb":
            gx, gy = self.generator.grad(x), self.generator.grad(y)
            hx, hy = ad.add(x, gx), ad.add(y, gy)
            n, m = hx.shape[0], hy.shape[0]
            sq = ad.add(
                ad.reshape(_rowsum(ad.square(hx)), (n, 1)),
                ad.reshape(_rowsum(ad.square(hy)), (1, m)),
            )
            sq = ad.sub(sq, ad.mul(2.0, ad.matmul(hx, ad.transpose(hy))))
            return ad.sqrt(ad.add(ad.maximum(ad.mul(0.5, sq), 0.0), SQRT_EPS))
        d = bregman_pairwise(self.generator, x, y)
        if self.variant == "sqrt":
            return ad.sqrt(ad.add(ad.maximum(d, 0.0), SQRT_EPS))
        return d


def learned_divergence(model: DivergenceModel, a, b, tape: ad.Tape | None = None):
    """D(f(a), f(b)) for the model's variant; a graph node (use ``.data`` for values)."""
    return model.bind(tape).divergence(a, b)
