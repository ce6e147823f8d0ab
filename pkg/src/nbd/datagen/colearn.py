"""Vector-valued digit co-learning task.

Each class is a random Gaussian prototype; the target between two samples
is a scalar Bregman divergence between their class digits, so a model has
to learn the class -> number map and the divergence together.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..divergences import bregman, closed_form_generator
from . import LabeledPoints, PairSet

KINDS = ("shifted-xlogx", "xlogx", "sq-euclidean")


@dataclass(frozen=True)
class ColearnSpec:
    k: int = 10
    per_class: int = 200
    per_class_test: int = 50
    dim: int = 32
    noise: float = 0.5
    n_train: int = 20000
    n_test: int = 4000
    kind: str = "shifted-xlogx"
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("need k >= 2")
        if self.kind not in KINDS:
            raise ValueError(f"unknown colearn kind {self.kind!r}; expected one of {KINDS}")
        if min(self.per_class, self.per_class_test, self.dim, self.n_train, self.n_test) < 1 or self.noise < 0:
            raise ValueError("invalid colearn parameters")

    @property
    def digits(self) -> np.ndarray:
        # t log t is undefined at 0, so that kind numbers its classes from 1
        start = 1 if self.kind == "xlogx" else 0
        return np.arange(start, start + self.k)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ColearnData:
    train: PairSet
    test: PairSet
    train_points: LabeledPoints
    test_points: LabeledPoints
    prototypes: np.ndarray


def colearn_target(da, db, kind: str = "shifted-xlogx") -> np.ndarray:
    """Scalar divergence between digit values (arrays broadcast elementwise)."""
    da = np.asarray(da, dtype=np.float64)
    db = np.asarray(db, dtype=np.float64)
    if kind == "sq-euclidean":
        return (da - db) ** 2
    gen = closed_form_generator(kind)
    flat_a, flat_b = np.broadcast_arrays(da, db)
    out = bregman(gen, flat_a.reshape(-1, 1), flat_b.reshape(-1, 1)).data
    return np.maximum(out, 0.0).reshape(flat_a.shape)


def _sample(prototypes, digits, per_class, noise, rng) -> LabeledPoints:
    labels = np.repeat(digits, per_class)
    idx = np.repeat(np.arange(len(digits)), per_class)
    x = prototypes[idx] + rng.normal(0.0, noise, size=(len(idx), prototypes.shape[1]))
    return LabeledPoints(x, labels)


def _pairs(points: LabeledPoints, count: int, kind: str, rng) -> PairSet:
    i = rng.integers(0, len(points), size=count)
    j = rng.integers(0, len(points), size=count)
    y = colearn_target(points.labels[i], points.labels[j], kind)
    return PairSet(points.x[i], points.x[j], y)


def gen_colearn(spec: ColearnSpec) -> ColearnData:
    """Labels are the digits themselves; train and test pairs use disjoint samples."""
    rng = np.random.default_rng(spec.seed)
    digits = spec.digits
    prototypes = rng.standard_normal((spec.k, spec.dim))
    train_pts = _sample(prototypes, digits, spec.per_class, spec.noise, rng)
    test_pts = _sample(prototypes, digits, spec.per_class_test, spec.noise, rng)
    return ColearnData(
        _pairs(train_pts, spec.n_train, spec.kind, rng),
        _pairs(test_pts, spec.n_test, spec.kind, rng),
        train_pts,
        test_pts,
        prototypes,
    )
