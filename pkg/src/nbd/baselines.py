"""Learned squared-Mahalanobis distance, the comparison model for regression."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class MahalanobisModel:
    """D(a, b) = ||L (a - b)||^2 with a learned square matrix L (starts at I)."""

    factor: np.ndarray
    variant: str = "plain"

    @classmethod
    def identity(cls, dim: int) -> "MahalanobisModel":
        return cls(np.eye(dim))

    @property
    def input_dim(self) -> int:
        return self.factor.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"maha.L": self.factor}

    def bind(self, tape: ad.Tape | None = None) -> "BoundMahalanobis":
        factor = self.factor if tape is None else tape.param("maha.L", self.factor)
        return BoundMahalanobis(factor)


@dataclass
class BoundMahalanobis:
    factor: object

    def embed(self, a):
        return ad.matmul(a, ad.transpose(self.factor))

    def divergence(self, a, b):
        if np.shape(ad._data(a)) != np.shape(ad._data(b)):
            raise ValueError("divergence: shapes differ")
        return ad.sum(ad.square(self.embed(ad.sub(a, b))), axis=-1)

    def pairwise(self, a, b):
        x, y = self.embed(a), self.embed(b)
        n, m = x.shape[0], y.shape[0]
        sq = ad.add(ad.reshape(ad.sum(ad.square(x), axis=-1), (n, 1)), ad.reshape(ad.sum(ad.square(y), axis=-1), (1, m)))
        return ad.maximum(ad.sub(sq, ad.mul(2.0, ad.matmul(x, ad.transpose(y)))), 0.0)
