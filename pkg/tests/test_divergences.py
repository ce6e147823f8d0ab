import numpy as np
import pytest

from nbd.divergences import (
    DivergenceModel,
    DomainError,
    bregman,
    bregman_pairwise,
    closed_form_generator,
    gsb_squared,
    icnn_generator,
    learned_divergence,
)
from nbd.encoder import linear_identity_encoder
from nbd.icnn import IcnnConfig, init_icnn
from oracles import ficnn_bregman


def D(gen, x, y):
    return bregman(gen, np.asarray(x, float), np.asarray(y, float)).data


def test_sq_euclidean_unit():
    assert D(closed_form_generator("sq-euclidean"), [1.0, 0.0], [0.0, 0.0]) == 1.0


def test_xlogx_worked_value():
    val = float(D(closed_form_generator("xlogx"), 4.0, 6.0))
    assert val == pytest.approx(4 * np.log(4 / 6) + 2, rel=1e-12)
    assert round(val, 3) == 0.378


def test_kl_on_simplex():
    gen = closed_form_generator("kl-positive")
    assert D(gen, [0.5, 0.5], [0.5, 0.5]) == 0.0
    expect = 0.9 * np.log(0.9 / 0.5) + 0.1 * np.log(0.1 / 0.5)
    assert D(gen, [0.9, 0.1], [0.5, 0.5]) == pytest.approx(expect, rel=1e-12)
    assert expect == pytest.approx(0.368, abs=5e-4)


def test_mahalanobis_identity_is_sq_euclidean():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((100, 4)), rng.standard_normal((100, 4))
    a = D(closed_form_generator("mahalanobis", np.eye(4)), x, y)
    b = D(closed_form_generator("sq-euclidean"), x, y)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_mahalanobis_matrix_checks():
    with pytest.raises(ValueError):
        closed_form_generator("mahalanobis", np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        closed_form_generator("mahalanobis", -np.eye(2))
    with pytest.raises(ValueError):
        closed_form_generator("mahalanobis")
    with pytest.raises(ValueError):
        closed_form_generator("itakura-saito")


def test_domain_errors():
    with pytest.raises(DomainError):
        D(closed_form_generator("xlogx"), [0.0, 1.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        D(closed_form_generator("shifted-xlogx"), [-1.0], [1.0])
    assert D(closed_form_generator("shifted-xlogx"), [0.0], [0.0]) == 0.0


def test_shape_mismatch():
    with pytest.raises(ValueError):
        D(closed_form_generator("sq-euclidean"), [1.0, 2.0], [1.0])


def test_closed_forms_match_hand_formulas():
    rng = np.random.default_rng(1)
    x, y = rng.uniform(0.1, 3, (200, 5)), rng.uniform(0.1, 3, (200, 5))
    hand = np.sum(x * np.log(x / y) - x + y, axis=1)
    np.testing.assert_allclose(D(closed_form_generator("xlogx"), x, y), hand, rtol=1e-8)
    xs, ys = x + 1, y + 1
    hand = np.sum(xs * np.log(xs / ys) - xs + ys, axis=1)
    np.testing.assert_allclose(D(closed_form_generator("shifted-xlogx"), x, y), hand, rtol=1e-8)
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    u, v = rng.standard_normal((50, 2)), rng.standard_normal((50, 2))
    np.testing.assert_allclose(
        D(closed_form_generator("mahalanobis", a), u, v), np.einsum("ni,ij,nj->n", u - v, a, u - v), rtol=1e-8
    )


def test_asymmetry_witness():
    gen = closed_form_generator("xlogx")
    assert abs(float(D(gen, 0.5, 4.0)) - float(D(gen, 4.0, 0.5))) > 0.1


def test_icnn_divergence_matches_oracle():
    rng = np.random.default_rng(2)
    p = init_icnn(IcnnConfig(6, (16, 16)), 2)
    x, y = rng.standard_normal(6), rng.standard_normal(6)
    got = D(icnn_generator(p), x, y)
    assert got == pytest.approx(ficnn_bregman(p.skip, p.bias, p.raw, p.config.strictness, x, y), rel=1e-10)


@pytest.mark.parametrize("kind", ["sq-euclidean", "shifted-xlogx"])
def test_pairwise_matches_loop_closed_form(kind):
    rng = np.random.default_rng(3)
    gen = closed_form_generator(kind)
    x, y = rng.uniform(0, 2, (7, 3)), rng.uniform(0, 2, (5, 3))
    m = bregman_pairwise(gen, x, y).data
    loop = np.array([[D(gen, a, b) for b in y] for a in x])
    np.testing.assert_allclose(m, loop, atol=1e-9)


def test_pairwise_icnn_matches_loop_and_degenerate():
    rng = np.random.default_rng(4)
    gen = icnn_generator(init_icnn(IcnnConfig(10, (32, 32)), 4))
    x, y = rng.standard_normal((50, 10)), rng.standard_normal((50, 10))
    m = bregman_pairwise(gen, x, y).data
    loop = np.array([[D(gen, a, b) for b in y] for a in x])
    np.testing.assert_allclose(m, loop, atol=1e-9)
    one = bregman_pairwise(gen, x[:1], y[:1]).data
    assert one.shape == (1, 1) and one[0, 0] == pytest.approx(float(D(gen, x[0], y[0])), abs=1e-12)
    sq = bregman_pairwise(closed_form_generator("sq-euclidean"), x, x).data
    np.testing.assert_allclose(np.diag(sq), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        bregman_pairwise(gen, x, y[:, :3])


def test_identity_encoder_reduces_to_sq_euclidean():
    rng = np.random.default_rng(5)
    model = DivergenceModel(closed_form_generator("sq-euclidean"), linear_identity_encoder(4))
    a, b = rng.standard_normal((20, 4)), rng.standard_normal((20, 4))
    np.testing.assert_allclose(learned_divergence(model, a, b).data, np.sum((a - b) ** 2, axis=1), rtol=1e-12)


def test_variants():
    rng = np.random.default_rng(6)
    p = init_icnn(IcnnConfig(5, (16, 16)), 6)
    a, b, c = (rng.standard_normal((1000, 5)) for _ in range(3))
    plain = learned_divergence(DivergenceModel(p), a, b).data
    sq = learned_divergence(DivergenceModel(p, variant="sqrt"), a, b).data
    np.testing.assert_allclose(sq, np.sqrt(plain + 1e-12), rtol=1e-12)
    gsb = DivergenceModel(p, variant="gsb")
    ab = learned_divergence(gsb, a, b).data
    ba = learned_divergence(gsb, b, a).data
    assert np.array_equal(ab, ba)
    ac = learned_divergence(gsb, a, c).data
    bc = learned_divergence(gsb, b, c).data
    assert np.all(ac <= ab + bc + 1e-9)
    # the gsb square equals the four-term definition
    gen = icnn_generator(p)
    four = plain + learned_divergence(DivergenceModel(p), b, a).data
    ga, gb = gen.grad(a).data, gen.grad(b).data
    four = four + 0.5 * np.sum((a - b) ** 2, axis=1) + 0.5 * np.sum((ga - gb) ** 2, axis=1)
    np.testing.assert_allclose(gsb_squared(gen, a, b).data, four, rtol=1e-9)
    with pytest.raises(ValueError):
        DivergenceModel(closed_form_generator("sq-euclidean"), variant="gsb")
    with pytest.raises(ValueError):
        DivergenceModel(p, variant="cube")


def test_gsb_pairwise_matches_rowwise():
    rng = np.random.default_rng(7)
    model = DivergenceModel(init_icnn(IcnnConfig(4, (8,)), 7), variant="gsb")
    x, y = rng.standard_normal((6, 4)), rng.standard_normal((5, 4))
    m = model.bind().pairwise(x, y).data
    loop = np.array([[model.bind().divergence(a[None], b[None]).data[0] for b in y] for a in x])
    np.testing.assert_allclose(m, loop, rtol=1e-9, atol=1e-9)
