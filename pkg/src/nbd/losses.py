"""Regression and triplet objectives, and batch-all triplet mining."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad


def mse_loss(predicted, target):
    """Mean squared error between a batch of predictions and targets."""
    n = np.size(ad._data(predicted))
    if n == 0:
        raise ValueError("mse_loss: empty batch")
    if np.shape(ad._data(predicted)) != np.shape(target):
        raise ValueError(f"mse_loss: shapes differ, {np.shape(ad._data(predicted))} vs {np.shape(target)}")
    return ad.mean(ad.square(ad.sub(predicted, np.asarray(target, dtype=np.float64))))


@dataclass(frozen=True)
class TripletBatch:
    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray
    margin: float = 0.2

    def __len__(self):
        return len(self.anchors)

    def as_set(self) -> set[tuple[int, int, int]]:
        return set(zip(self.anchors.tolist(), self.positives.tolist(), self.negatives.tolist()))


def mine_from_matrix(dmat: np.ndarray, labels: np.ndarray, margin: float = 0.2) -> TripletBatch:
    """Every (a, p, n) with label[a] == label[p] != label[n], a != p and a positive hinge.

    ``dmat[i, j]`` is D(point i, point j); triplets use D(anchor, other).
    """
    labels = np.asarray(labels)
    n = len(labels)
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    valid = pos_mask[:, :, None] & neg_mask[:, None, :]
    hinge = dmat[:, :, None] - dmat[:, None, :] + margin
    a, p, q = np.nonzero(valid & (hinge > 0))
    return TripletBatch(a, p, q, margin)


def mine_triplets(points, labels, divergence: Callable, margin: float = 0.2) -> TripletBatch:
    """Batch-all mining; ``divergence(X, Y)`` returns the all-pairs matrix."""
    d = divergence(points, points)
    return mine_from_matrix(np.asarray(ad._data(d)), labels, margin)


def triplet_loss(batch: TripletBatch, divergence: Callable):
    """Mean hinge ``max(0, D(a,p) - D(a,n) + margin)`` over the batch.

    ``divergence(i, j)`` returns D(point i, point j) for index arrays.
    An empty batch gives a constant zero.
    """
    if len(batch) == 0:
        return ad.Tensor(0.0)
    d_ap = divergence(batch.anchors, batch.positives)
    d_an = divergence(batch.anchors, batch.negatives)
    return ad.mean(ad.maximum(ad.add(ad.sub(d_ap, d_an), batch.margin), 0.0))


def matrix_lookup(dmat) -> Callable:
    """Index-pair access into an all-pairs matrix node, differentiable."""
    m = dmat.shape[1]
    flat = ad.reshape(dmat, (dmat.shape[0] * m,))
    return lambda i, j: ad.take(flat, np.asarray(i) * m + np.asarray(j))
