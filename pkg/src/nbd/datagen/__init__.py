"""Seeded synthetic datasets.

Every generator is a pure function of its spec (which carries the seed).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PairSet:
    """Supervision pairs ``(a[i], b[i]) -> target[i]``."""

    a: np.ndarray
    b: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)
        if not (len(self.a) == len(self.b) == len(self.target)):
            raise ValueError("PairSet: a, b and target lengths differ")

    def __len__(self):
        return len(self.target)

    def subset(self, idx) -> "PairSet":
        return PairSet(self.a[idx], self.b[idx], self.target[idx])


@dataclass
class LabeledPoints:
    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if len(self.x) != len(self.labels):
            raise ValueError("LabeledPoints: x and labels lengths differ")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledPoints":
        return LabeledPoints(self.x[idx], self.labels[idx])


from .colearn import ColearnSpec, colearn_target, gen_colearn  # noqa: E402
from .graphs import GraphSpec, astar, gen_graph_task  # noqa: E402
from .mixtures import MixtureSpec, gen_mixture, random_spd  # noqa: E402
from .regression import RegressionSpec, correlation_matrix, gen_regression_pairs  # noqa: E402

__all__ = [
    "PairSet",
    "LabeledPoints",
    "MixtureSpec",
    "gen_mixture",
    "random_spd",
    "RegressionSpec",
    "gen_regression_pairs",
    "correlation_matrix",
    "GraphSpec",
    "gen_graph_task",
    "astar",
    "ColearnSpec",
    "gen_colearn",
    "colearn_target",
]
