"""Pair regression with 10 informative and 10 distractor features."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..divergences import bregman, closed_form_generator
from . import PairSet
from .mixtures import random_spd

TARGETS = ("sq-euclidean", "mahalanobis", "xlogx", "kl")
KAPPA_BANDS = {"none": (1.0, 1.0), "med": (10.0, 100.0), "high": (250.0, 500.0)}
MAX_DRAWS = 1000


@dataclass(frozen=True)
class RegressionSpec:
    pairs: int = 50000
    d: int = 20
    informative: int = 10
    distractors: int = 10
    target: str = "sq-euclidean"
    correlation: str = "none"
    seed: int = 0
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown regression target {self.target!r}; expected one of {TARGETS}")
        if self.correlation not in KAPPA_BANDS:
            raise ValueError(f"correlation must be one of {tuple(KAPPA_BANDS)}")
        if self.informative + self.distractors != self.d or self.informative < 1:
            raise ValueError("informative + distractors must equal d")
        if self.pairs < 2 or not 0.0 < self.test_fraction < 1.0:
            raise ValueError("need pairs >= 2 and 0 < test_fraction < 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegressionData:
    train: PairSet
    test: PairSet
    covariance: np.ndarray


def _random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def correlation_matrix(d: int, band: str, rng: np.random.Generator) -> np.ndarray:
    """Unit-diagonal covariance whose condition number falls in ``band``.

    Eigenvalues are log-uniform between 1 and a drawn kappa, the basis is
    random; after rescaling to unit diagonal the condition number is
    re-checked and the draw repeated until it lands in the band.
    """
    lo, hi = KAPPA_BANDS[band]
    if band == "none":
        return np.eye(d)
    if d < 2:
        raise ValueError("correlated features need d >= 2")
    for _ in range(MAX_DRAWS):
        kappa = np.exp(rng.uniform(np.log(lo), np.log(hi)))
        eig = np.exp(rng.uniform(0.0, np.log(kappa), size=d))
        eig[0], eig[1] = 1.0, kappa
        q = _random_orthogonal(d, rng)
        cov = (q * eig) @ q.T
        s = 1.0 / np.sqrt(np.diag(cov))
        corr = cov * s[:, None] * s[None, :]
        corr = 0.5 * (corr + corr.T)
        np.fill_diagonal(corr, 1.0)
        w = np.linalg.eigvalsh(corr)
        if w[0] > 0 and lo <= w[-1] / w[0] <= hi:
            return corr
    raise ValueError(f"could not reach condition number in [{lo}, {hi}] for d={d}")


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def regression_targets(target: str, a: np.ndarray, b: np.ndarray, matrix: np.ndarray | None = None) -> np.ndarray:
    """Target divergence between informative blocks ``a`` and ``b``."""
    if target == "sq-euclidean":
        return np.sum((a - b) ** 2, axis=-1)
    if target == "mahalanobis":
        diff = a - b
        return np.einsum("ni,ij,nj->n", diff, matrix, diff)
    if target == "xlogx":
        gen = closed_form_generator("xlogx")
        pa, pb = _softplus(a), _softplus(b)
    else:
        gen = closed_form_generator("kl-positive")
        pa, pb = _softmax(a), _softmax(b)
    return np.maximum(bregman(gen, pa, pb).data, 0.0)


def gen_regression_pairs(spec: RegressionSpec) -> RegressionData:
    rng = np.random.default_rng(spec.seed)
    cov = correlation_matrix(spec.d, spec.correlation, rng)
    chol = np.linalg.cholesky(cov)
    a = rng.standard_normal((spec.pairs, spec.d)) @ chol.T
    b = rng.standard_normal((spec.pairs, spec.d)) @ chol.T
    k = spec.informative
    matrix = random_spd(k, rng) if spec.target == "mahalanobis" else None
    y = regression_targets(spec.target, a[:, :k], b[:, :k], matrix)
    n_test = max(1, int(round(spec.pairs * spec.test_fraction)))
    cut = spec.pairs - n_test
    return RegressionData(PairSet(a[:cut], b[:cut], y[:cut]), PairSet(a[cut:], b[cut:], y[cut:]), cov)
