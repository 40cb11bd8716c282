import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imitate.errors import InputError, NumericError
from imitate.gaussian import (
    AffineFrame,
    Gaussian,
    kmeans,
    kmeans_init,
    log_density,
    log_density_many,
    product_of_gaussians,
    regularize,
    transform,
)
from oracles import gauss_pdf, grid_product_1d


def random_spd(rng, D, scale=1.0):
    M = rng.normal(size=(D, D))
    return scale * (M @ M.T + D * np.eye(D))


def random_frame(rng, D):
    A = rng.normal(size=(D, D)) + 2 * np.eye(D)
    return AffineFrame(A, rng.normal(size=D))


# -- types -----------------------------------------------------------------


def test_gaussian_rejects_asymmetric_cov():
    with pytest.raises(InputError):
        Gaussian(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_gaussian_rejects_shape_mismatch():
    with pytest.raises(InputError):
        Gaussian(np.zeros(3), np.eye(2))


def test_frame_rejects_singular():
    with pytest.raises(InputError):
        AffineFrame(np.array([[1.0, 2.0], [2.0, 4.0]]), np.zeros(2))


def test_regularize_adds_relative_floor():
    cov = np.diag([2.0, 4.0])
    out = regularize(cov)
    assert np.allclose(out - cov, 1e-6 * 3.0 * np.eye(2))
    assert np.linalg.eigvalsh(regularize(np.zeros((2, 2)), 1e-8)).min() >= 1e-8


# -- log density -----------------------------------------------------------


def test_log_density_standard_normal_mode():
    assert log_density(np.array([0.0]), Gaussian(np.zeros(1), np.eye(1))) == pytest.approx(
        math.log(1 / math.sqrt(2 * math.pi)), abs=1e-12
    )


def test_log_density_at_mean(rng):
    cov = random_spd(rng, 3)
    mu = rng.normal(size=3)
    expected = -0.5 * math.log((2 * math.pi) ** 3 * np.linalg.det(cov))
    assert log_density(mu, Gaussian(mu, cov)) == pytest.approx(expected, abs=1e-10)


def test_log_density_hand_value():
    g = Gaussian(np.zeros(2), np.diag([2.0, 2.0]))
    assert log_density(np.array([1.0, 1.0]), g) == pytest.approx(-math.log(4 * math.pi) - 0.5, abs=1e-12)


def test_log_density_matches_direct_formula(rng):
    cov = random_spd(rng, 4)
    mu = rng.normal(size=4)
    X = rng.normal(size=(20, 4))
    got = log_density_many(X, mu, cov)
    ref = [math.log(gauss_pdf(x, mu, cov)) for x in X]
    assert np.allclose(got, ref, atol=1e-10)


def test_log_density_non_pd_raises():
    with pytest.raises(NumericError):
        log_density_many(np.zeros((1, 2)), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_log_density_dimension_mismatch():
    with pytest.raises(InputError):
        log_density(np.zeros(3), Gaussian(np.zeros(2), np.eye(2)))


def test_density_integrates_to_one_2d():
    g = Gaussian(np.array([0.3, -0.2]), np.array([[1.0, 0.3], [0.3, 0.5]]))
    x = np.linspace(-8, 8, 401)
    XX, YY = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    p = np.exp(log_density_many(pts, g.mean, g.cov)).reshape(XX.shape)
    h = x[1] - x[0]
    assert p.sum() * h * h == pytest.approx(1.0, abs=1e-3)


# -- transform -------------------------------------------------------------


def test_transform_identity(rng):
    g = Gaussian(rng.normal(size=2), random_spd(rng, 2))
    assert transform(g, AffineFrame.identity(2)).allclose(g)


def test_transform_translation():
    g = Gaussian(np.zeros(2), np.eye(2))
    out = transform(g, AffineFrame(np.eye(2), np.array([1.0, 2.0])))
    assert np.allclose(out.mean, [1, 2]) and np.allclose(out.cov, np.eye(2))


def test_transform_scalar_monte_carlo():
    out = transform(Gaussian(np.array([1.0]), np.eye(1)), AffineFrame(np.array([[2.0]]), np.array([1.0])))
    samples = 2.0 * np.random.default_rng(0).normal(1.0, 1.0, 10**6) + 1.0
    assert out.mean[0] == pytest.approx(3.0) and out.cov[0, 0] == pytest.approx(4.0)
    assert samples.mean() == pytest.approx(3.0, abs=0.01)
    assert samples.var() == pytest.approx(4.0, rel=0.01)


def test_transform_inverse_roundtrip(rng):
    for _ in range(20):
        g = Gaussian(rng.normal(size=3), random_spd(rng, 3))
        f = random_frame(rng, 3)
        back = transform(transform(g, f), f.inverse())
        assert np.allclose(back.mean, g.mean, atol=1e-9)
        assert np.allclose(back.cov, g.cov, atol=1e-9)


# -- product ---------------------------------------------------------------


def test_product_empty_raises():
    with pytest.raises(InputError):
        product_of_gaussians([])


def test_product_single_factor(rng):
    g = Gaussian(rng.normal(size=2), random_spd(rng, 2))
    assert product_of_gaussians([g]).allclose(g)


def test_product_equal_precisions():
    g = product_of_gaussians([Gaussian(np.array([0.0]), np.eye(1)), Gaussian(np.array([2.0]), np.eye(1))])
    assert g.mean[0] == pytest.approx(1.0) and g.cov[0, 0] == pytest.approx(0.5)


def test_product_hand_value_and_grid():
    g = product_of_gaussians([Gaussian(np.array([0.0]), np.eye(1)), Gaussian(np.array([3.0]), 0.5 * np.eye(1))])
    assert g.mean[0] == pytest.approx(2.0, abs=1e-12)
    assert g.cov[0, 0] == pytest.approx(1 / 3, abs=1e-12)
    m, v = grid_product_1d([0.0, 3.0], [1.0, 0.5])
    assert abs(m - 2.0) < 1e-4 and abs(v - 1 / 3) < 1e-4


def test_product_order_invariant(rng):
    gs = [Gaussian(rng.normal(size=3), random_spd(rng, 3)) for _ in range(4)]
    a = product_of_gaussians(gs)
    b = product_of_gaussians(gs[::-1])
    assert np.allclose(a.mean, b.mean, atol=1e-10) and np.allclose(a.cov, b.cov, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_product_precision_is_sum(D, F, seed):
    rng = np.random.default_rng(seed)
    gs = [Gaussian(rng.normal(size=D), random_spd(rng, D)) for _ in range(F)]
    out = product_of_gaussians(gs)
    total = sum(np.linalg.inv(g.cov) for g in gs)
    assert np.allclose(np.linalg.inv(out.cov), total, rtol=1e-9, atol=1e-9)


# -- k-means ---------------------------------------------------------------


def test_kmeans_init_single_cluster(rng):
    X = rng.normal(size=(50, 3))
    priors, gs = kmeans_init(X, 1)
    assert np.allclose(priors, [1.0])
    assert np.allclose(gs[0].mean, X.mean(axis=0))
    assert np.allclose(gs[0].cov, np.cov(X.T, bias=True), atol=1e-5)


def test_kmeans_two_blobs(rng):
    centers = np.array([[0.0, 0.0], [5.0, 5.0]])
    X = np.vstack([c + 0.3 * rng.normal(size=(100, 2)) for c in centers])
    _, gs = kmeans_init(X, 2, seed=3)
    found = sorted((g.mean for g in gs), key=lambda m: m[0])
    assert np.allclose(found, centers, atol=0.1)


def test_kmeans_deterministic(rng):
    X = rng.normal(size=(80, 2))
    a = kmeans(X, 4, seed=7)
    b = kmeans(X, 4, seed=7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_kmeans_invalid_k(rng):
    X = rng.normal(size=(5, 2))
    with pytest.raises(InputError):
        kmeans_init(X, 0)
    with pytest.raises(InputError):
        kmeans_init(X, 6)


def test_kmeans_duplicate_points_no_empty_cluster():
    X = np.vstack([np.zeros((10, 2)), np.ones((2, 2))])
    labels, _ = kmeans(X, 3, seed=0)
    assert len(np.unique(labels)) >= 2
