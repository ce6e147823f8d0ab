import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbd import autodiff as ad
from nbd.losses import TripletBatch, matrix_lookup, mine_from_matrix, mine_triplets, mse_loss, triplet_loss
from nbd.optim import Adam
from oracles import brute_triplets


def test_mse_examples():
    assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0])).item() == 0.0
    assert mse_loss(np.array([0.0]), np.array([2.0])).item() == 4.0
    with pytest.raises(ValueError):
        mse_loss(np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        mse_loss(np.zeros(2), np.zeros(3))


def test_mse_matches_loop():
    rng = np.random.default_rng(0)
    p, t = rng.standard_normal(37), rng.standard_normal(37)
    loop = sum((a - b) ** 2 for a, b in zip(p, t)) / 37
    assert mse_loss(p, t).item() == pytest.approx(loop, abs=1e-12)


def test_mining_examples():
    labels = np.array([0, 0, 1, 1])
    same = labels[:, None] == labels[None, :]
    dmat = np.where(same, 0.0, 1.0)
    assert len(mine_from_matrix(dmat, labels, 0.2)) == 0
    const = np.ones((4, 4))
    batch = mine_from_matrix(const, labels, 0.2)
    # each anchor: one positive, two negatives
    assert len(batch) == 4 * 1 * 2
    assert len(mine_from_matrix(const, np.zeros(4, dtype=int), 0.2)) == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_mining_matches_brute_force_and_is_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 3, size=16)
    dmat = rng.uniform(0, 1, (16, 16))
    got = mine_from_matrix(dmat, labels, 0.2).as_set()
    assert got == brute_triplets(dmat, labels, 0.2)
    perm = rng.permutation(16)
    permuted = mine_from_matrix(dmat[np.ix_(perm, perm)], labels[perm], 0.2).as_set()
    assert {(perm[a], perm[p], perm[n]) for a, p, n in permuted} == got


def test_mine_triplets_with_callable():
    x = np.array([[0.0], [0.1], [5.0], [5.2]])
    labels = np.array([0, 0, 1, 1])
    batch = mine_triplets(x, labels, lambda a, b: (a - b.T) ** 2, margin=0.2)
    assert len(batch) == 0


def test_triplet_loss_examples():
    def table(vals):
        return lambda i, j: ad.Tensor(np.array([vals[(a, b)] for a, b in zip(i, j)]))

    one = TripletBatch(np.array([0]), np.array([1]), np.array([2]), 0.2)
    assert triplet_loss(one, table({(0, 1): 0.0, (0, 2): 1.0})).item() == 0.0
    assert triplet_loss(one, table({(0, 1): 1.0, (0, 2): 0.0})).item() == pytest.approx(1.2)
    empty = TripletBatch(np.zeros(0, int), np.zeros(0, int), np.zeros(0, int))
    assert triplet_loss(empty, table({})).item() == 0.0


def test_triplet_loss_matches_loop():
    rng = np.random.default_rng(1)
    labels = rng.integers(0, 3, size=12)
    dmat = rng.uniform(0, 1, (12, 12))
    batch = mine_from_matrix(dmat, labels, 0.2)
    got = triplet_loss(batch, matrix_lookup(ad.Tensor(dmat))).item()
    loop = np.mean([max(0.0, dmat[a, p] - dmat[a, n] + 0.2) for a, p, n in batch.as_set()])
    assert got == pytest.approx(loop, abs=1e-12)


def test_adam_zero_gradient_and_first_step():
    p = {"w": np.array([1.0, -2.0])}
    Adam(lr=0.1).step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])
    q = {"w": np.array([0.5])}
    Adam(lr=0.1).step(q, {"w": np.array([1.0])})
    assert q["w"][0] == pytest.approx(0.4, abs=1e-6)


def test_adam_converges_on_quadratic():
    p = {"w": np.array([0.0])}
    opt = Adam(lr=0.1)
    for _ in range(100):
        opt.step(p, {"w": 2 * (p["w"] - 3.0)})
    assert abs(p["w"][0] - 3.0) < 0.05


def test_adam_rejects_non_finite():
    with pytest.raises(FloatingPointError, match="bad"):
        Adam().step({"bad": np.zeros(1)}, {"bad": np.array([np.nan])})
