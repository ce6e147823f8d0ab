"""Bregman k-means and clustering / retrieval metrics."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray
    iterations: int
    objective: float
    # assignments and objective after every assignment step
    history: list = field(default_factory=list)
    objectives: list = field(default_factory=list)


def sq_euclidean_pairwise(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)


def seed_centroids(points: np.ndarray, k: int, divergence: Callable, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with the given pairwise divergence D(point, centre)."""
    n = len(points)
    chosen = [int(rng.integers(n))]
    closest = np.maximum(divergence(points, points[chosen]).ravel(), 0.0)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0 and np.isfinite(total):
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        closest = np.minimum(closest, np.maximum(divergence(points, points[[nxt]]).ravel(), 0.0))
    return points[chosen].copy()


def _means(points, assign, k, old):
    cent = old.copy()
    for c in range(k):
        members = assign == c
        if members.any():
            cent[c] = points[members].mean(axis=0)
    return cent


def _reseed_empty(points, assign, dmat, cent):
    """Each empty cluster takes the point farthest from its own centroid."""
    k = len(cent)
    cost = dmat[np.arange(len(points)), assign].copy()
    for c in range(k):
        if np.any(assign == c):
            continue
        counts = np.bincount(assign, minlength=k)
        i = int(np.argmax(np.where(counts[assign] > 1, cost, -np.inf)))
        assign[i] = c
        cent[c] = points[i]
        cost[i] = 0.0
        log.debug("re-seeded empty cluster %d at point %d", c, i)


def bregman_kmeans(
    points: np.ndarray,
    k: int,
    divergence: Callable = sq_euclidean_pairwise,
    seed: int = 0,
    max_iter: int = 100,
    init: np.ndarray | None = None,
) -> ClusteringResult:
    """Lloyd iterations with D(point, centroid) assignment and mean update.

    ``divergence(X, C)`` returns the (n, k) matrix of D(X[i], C[j]).
    Stops when an assignment step changes nothing or after ``max_iter``.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    cent = seed_centroids(points, k, divergence, rng) if init is None else np.array(init, dtype=np.float64)
    if cent.shape != (k, points.shape[1]):
        raise ValueError(f"init must have shape {(k, points.shape[1])}")
    history, objectives = [], []
    assign = None
    for _ in range(max_iter):
        dmat = divergence(points, cent)
        new = np.argmin(dmat, axis=1)
        if len(np.unique(new)) < k:
            _reseed_empty(points, new, dmat, cent)
            dmat = divergence(points, cent)
        history.append(new.copy())
        objectives.append(float(np.sum(dmat[np.arange(n), new])))
        if assign is not None and np.array_equal(new, assign):
            assign = new
            break
        assign = new
        cent = _means(points, assign, k, cent)
    dmat = divergence(points, cent)
    obj = float(np.sum(dmat[np.arange(n), assign]))
    return ClusteringResult(assign, cent, len(history), obj, history, objectives)


def _contingency(a, b) -> np.ndarray:
    _, ai = np.unique(np.asarray(a), return_inverse=True)
    _, bi = np.unique(np.asarray(b), return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def purity(assignments, labels) -> float:
    """Fraction of points carrying their cluster's majority label."""
    if len(assignments) != len(labels) or len(labels) == 0:
        raise ValueError("purity: need equal, non-empty inputs")
    return float(_contingency(assignments, labels).max(axis=1).sum() / len(labels))


def rand_index(assignments, labels) -> float:
    """Fraction of point pairs on which the two partitions agree."""
    n = len(labels)
    if len(assignments) != n or n < 2:
        raise ValueError("rand_index: need equal inputs with at least two points")
    t = _contingency(assignments, labels)
    pairs = lambda c: int(np.sum(c * (c - 1) // 2))  # noqa: E731
    both = pairs(t)
    same_a = pairs(t.sum(axis=1))
    same_b = pairs(t.sum(axis=0))
    total = n * (n - 1) // 2
    return (total + 2 * both - same_a - same_b) / total


def map_auc_from_matrix(dmat: np.ndarray, query_labels, corpus_labels) -> tuple[float, float]:
    """MAP and macro AUC from ``dmat[q, j] = D(query q, corpus item j)``.

    Items are ranked by increasing divergence, ties by corpus index.
    Queries with no relevant item are skipped (with a warning); queries
    with no irrelevant item have no AUC and are left out of its mean.
    """
    query_labels = np.asarray(query_labels)
    corpus_labels = np.asarray(corpus_labels)
    aps, aucs, skipped = [], [], 0
    for q in range(len(query_labels)):
        order = np.argsort(dmat[q], kind="stable")
        rel = corpus_labels[order] == query_labels[q]
        n_rel = int(rel.sum())
        n_irr = len(rel) - n_rel
        if n_rel == 0:
            skipped += 1
            continue
        hits = np.cumsum(rel)
        ranks = np.nonzero(rel)[0] + 1
        aps.append(float(np.mean(hits[rel] / ranks)))
        if n_irr:
            aucs.append(float(hits[~rel].sum()) / (n_rel * n_irr))
    if skipped:
        warnings.warn(f"{skipped} queries had no relevant corpus item and were skipped", RuntimeWarning, stacklevel=2)
    if not aps:
        raise ValueError("no query has a relevant corpus item")
    return float(np.mean(aps)), float(np.mean(aucs)) if aucs else float("nan")


def rank_map_auc(queries, query_labels, corpus, corpus_labels, divergence: Callable) -> tuple[float, float]:
    """Retrieval MAP/AUC; ``divergence(Q, C)`` returns the all-pairs matrix."""
    return map_auc_from_matrix(np.asarray(divergence(queries, corpus)), query_labels, corpus_labels)
