"""Fully input-convex network used as the generating function phi."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class IcnnConfig:
    input_dim: int
    hidden_widths: tuple[int, ...] = (128, 128)
    strictness: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise ValueError("hidden_widths must be a non-empty list of positive integers")
        if self.strictness < 0:
            raise ValueError("strictness must be non-negative")

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_widths": list(self.hidden_widths), "strictness": self.strictness}


@dataclass
class IcnnParams:
    """Parameters of phi.

    Layer ``i`` computes ``z[i+1] = softplus(W+[i] z[i] + U[i] x + b[i])``
    with ``W+ = softplus(raw)``.  The first hidden layer has no ``W+``
    term; the output layer is linear and scalar, so ``raw[-1]``,
    ``skip[-1]`` are vectors and ``bias[-1]`` is a 0-d array.

    Fields hold numpy arrays, or tape leaves after :meth:`bind`.
    """

    config: IcnnConfig
    skip: list = field(default_factory=list)
    bias: list = field(default_factory=list)
    raw: list = field(default_factory=list)

    def arrays(self, prefix: str = "phi") -> dict[str, np.ndarray]:
        out = {}
        for i, u in enumerate(self.skip):
            out[f"{prefix}.U{i}"] = u
        for i, b in enumerate(self.bias):
            out[f"{prefix}.b{i}"] = b
        for i, w in enumerate(self.raw, start=1):
            out[f"{prefix}.W{i}"] = w
        return out

    def bind(self, tape: ad.Tape | None, prefix: str = "phi") -> "IcnnParams":
        if tape is None:
            return self
        return IcnnParams(
            self.config,
            skip=[tape.param(f"{prefix}.U{i}", u) for i, u in enumerate(self.skip)],
            bias=[tape.param(f"{prefix}.b{i}", b) for i, b in enumerate(self.bias)],
            raw=[tape.param(f"{prefix}.W{i}", w) for i, w in enumerate(self.raw, start=1)],
        )

    @classmethod
    def from_arrays(cls, config: IcnnConfig, arrays: dict, prefix: str = "phi") -> "IcnnParams":
        n = len(config.hidden_widths)
        return cls(
            config,
            skip=[np.asarray(arrays[f"{prefix}.U{i}"], dtype=np.float64) for i in range(n + 1)],
            bias=[np.asarray(arrays[f"{prefix}.b{i}"], dtype=np.float64) for i in range(n + 1)],
            raw=[np.asarray(arrays[f"{prefix}.W{i}"], dtype=np.float64) for i in range(1, n + 1)],
        )


def _softplus_inverse(w):
    return w + np.log(-np.expm1(-w))


def init_icnn(config: IcnnConfig, seed: int) -> IcnnParams:
    """Random phi; positive weights have mean about 1/fan-in, biases start at 0."""
    rng = np.random.default_rng(seed)
    d = config.input_dim
    widths = config.hidden_widths
    skip, bias, raw = [], [], []
    for i, h in enumerate(widths):
        skip.append(rng.normal(0.0, 1.0 / np.sqrt(d), size=(h, d)))
        bias.append(np.zeros(h))
        if i > 0:
            fan_in = widths[i - 1]
            raw.append(_softplus_inverse(rng.uniform(0.5, 1.5, size=(h, fan_in)) / fan_in))
    skip.append(rng.normal(0.0, 1.0 / np.sqrt(d), size=d))
    bias.append(np.zeros(()))
    raw.append(_softplus_inverse(rng.uniform(0.5, 1.5, size=widths[-1]) / widths[-1]))
    return IcnnParams(config, skip=skip, bias=bias, raw=raw)


def _check_dim(params: IcnnParams, x):
    d = x.shape[-1] if len(x.shape) else None
    if d != params.config.input_dim:
        raise ValueError(f"phi expects inputs of dimension {params.config.input_dim}, got shape {x.shape}")


def _forward(params: IcnnParams, x):
    pre_acts, pos = [], []
    pre = ad.affine(x, params.skip[0], params.bias[0])
    pre_acts.append(pre)
    z = ad.softplus(pre)
    for i in range(1, len(params.skip) - 1):
        w = ad.softplus(params.raw[i - 1])
        pos.append(w)
        pre = ad.add(ad.affine(z, w), ad.affine(x, params.skip[i], params.bias[i]))
        pre_acts.append(pre)
        z = ad.softplus(pre)
    w_out = ad.softplus(params.raw[-1])
    pos.append(w_out)
    out = ad.add(ad.add(ad.matmul(z, w_out), ad.matmul(x, params.skip[-1])), params.bias[-1])
    alpha = params.config.strictness
    if alpha:
        out = ad.add(out, ad.mul(alpha, ad.sum(ad.square(x), axis=-1)))
    return out, pre_acts, pos


def phi_forward(params: IcnnParams, x):
    """phi(x) = ICNN(x) + strictness * ||x||^2, one value per row of ``x``.

    ``x`` may be an array, a tape node, or a :class:`~nbd.autodiff.Dual`.
    """
    _check_dim(params, x)
    return _forward(params, x)[0]


def phi_and_grad(params: IcnnParams, x):
    """phi(x) and its input gradient, both as graph nodes.

    The gradient is the reverse sweep through the layers written out with
    tape primitives, so it can itself be differentiated.
    """
    if isinstance(x, ad.Dual):
        raise TypeError("phi_and_grad does not accept tangent inputs")
    _check_dim(params, x)
    out, pre_acts, pos = _forward(params, x)
    alpha = params.config.strictness
    grad = params.skip[-1]
    if np.ndim(ad._data(x)) == 2:
        grad = ad.mul(np.ones((x.shape[0], 1)), grad)
    if alpha:
        grad = ad.add(grad, ad.mul(2.0 * alpha, x))
    delta = pos[-1]
    for i in range(len(pre_acts) - 1, -1, -1):
        e = ad.mul(delta, ad.sigmoid(pre_acts[i]))
        grad = ad.add(grad, ad.matmul(e, params.skip[i]))
        if i > 0:
            delta = ad.matmul(e, pos[i - 1])
    return out, grad


def phi_input_grad(params: IcnnParams, x):
    return phi_and_grad(params, x)[1]
