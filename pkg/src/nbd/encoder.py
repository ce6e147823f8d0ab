"""MLP feature extractor trained jointly with phi."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_widths: tuple[int, ...] = (256, 256)
    embed_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1 or self.embed_dim < 1:
            raise ValueError("encoder dimensions must be positive")

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_widths": list(self.hidden_widths), "embed_dim": self.embed_dim}


@dataclass
class EncoderParams:
    config: EncoderConfig
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def arrays(self, prefix: str = "enc") -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.W{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out

    def bind(self, tape: ad.Tape | None, prefix: str = "enc") -> "EncoderParams":
        if tape is None:
            return self
        n = len(self.weights)
        return EncoderParams(
            self.config,
            weights=[tape.param(f"{prefix}.W{i}", self.weights[i]) for i in range(n)],
            biases=[tape.param(f"{prefix}.b{i}", self.biases[i]) for i in range(n)],
        )

    @classmethod
    def from_arrays(cls, config: EncoderConfig, arrays: dict, prefix: str = "enc") -> "EncoderParams":
        n = len(config.hidden_widths) + 1
        return cls(
            config,
            weights=[np.asarray(arrays[f"{prefix}.W{i}"], dtype=np.float64) for i in range(n)],
            biases=[np.asarray(arrays[f"{prefix}.b{i}"], dtype=np.float64) for i in range(n)],
        )


def init_encoder(config: EncoderConfig, seed: int) -> EncoderParams:
    rng = np.random.default_rng(seed)
    sizes = [config.input_dim, *config.hidden_widths, config.embed_dim]
    weights = [rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)) for fan_in, fan_out in zip(sizes, sizes[1:])]
    biases = [np.zeros(fan_out) for fan_out in sizes[1:]]
    return EncoderParams(config, weights, biases)


def linear_identity_encoder(dim: int) -> EncoderParams:
    """Single linear layer with ``W = I``, ``b = 0``; encodes every input to itself."""
    return EncoderParams(EncoderConfig(dim, (), dim), [np.eye(dim)], [np.zeros(dim)])


def encode(params: EncoderParams, a):
    """Softplus hidden layers, linear output layer."""
    if a.shape[-1] != params.config.input_dim:
        raise ValueError(f"encoder expects input dimension {params.config.input_dim}, got shape {a.shape}")
    h = a
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = ad.affine(h, w, b)
        if i < last:
            h = ad.softplus(h)
    return h
