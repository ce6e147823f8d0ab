"""Distributional clustering mixtures (Gaussian, exponential, multinomial)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import LabeledPoints

FAMILIES = ("gaussian", "exponential", "multinomial")


@dataclass(frozen=True)
class MixtureSpec:
    family: str = "gaussian"
    n: int = 1000
    d: int = 10
    k: int = 5
    seed: int = 0
    # extra labeled points from the same clusters, for metric learning
    n_train: int = 0
    variance: float = 5.0
    counts: int = 100

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown mixture family {self.family!r}; expected one of {FAMILIES}")
        if not (self.n >= self.k >= 2):
            raise ValueError("need n >= k >= 2")
        if self.d < 1 or self.n_train < 0 or self.variance <= 0 or self.counts < 1:
            raise ValueError("invalid mixture parameters")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Mixture:
    points: LabeledPoints
    train: LabeledPoints | None
    # per-cluster means (gaussian), rates (exponential) or probabilities (multinomial)
    centers: np.ndarray
    covariances: np.ndarray | None = None


def random_spd(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random SPD matrix with eigenvalues in [1, 2] and random eigenvectors.

    Same recipe as scikit-learn's ``make_spd_matrix``.
    """
    a = rng.random((d, d))
    u, _, vt = np.linalg.svd(a.T @ a)
    out = u @ np.diag(1.0 + rng.random(d)) @ vt
    return 0.5 * (out + out.T)


def gen_mixture(spec: MixtureSpec) -> Mixture:
    rng = np.random.default_rng(spec.seed)
    d, k = spec.d, spec.k
    total = spec.n + spec.n_train
    labels = rng.integers(0, k, size=total)
    covs = None
    if spec.family == "gaussian":
        centers = rng.uniform(-4.0, 4.0, size=(k, d))
        covs = np.stack([random_spd(d, rng) + spec.variance * np.eye(d) for _ in range(k)])
        chol = np.linalg.cholesky(covs)
        z = rng.standard_normal((total, d))
        x = centers[labels] + np.einsum("nij,nj->ni", chol[labels], z)
    elif spec.family == "exponential":
        centers = rng.uniform(0.1, 10.0, size=(k, d))
        x = rng.exponential(1.0, size=(total, d)) / centers[labels]
    else:
        centers = rng.dirichlet(np.full(d, 10.0), size=k)
        x = np.stack([rng.multinomial(spec.counts, centers[c]) for c in labels]).astype(np.float64)
    points = LabeledPoints(x[: spec.n], labels[: spec.n])
    train = LabeledPoints(x[spec.n :], labels[spec.n :]) if spec.n_train else None
    return Mixture(points, train, centers, covs)
