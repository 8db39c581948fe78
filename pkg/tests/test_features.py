import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hcrlag.basis import BasisSpec, legendre_rows
from hcrlag.features import (
    analyze_tensor,
    contribution_grid,
    covariance_over_lags,
    extract_features,
    jacobi_eigh,
    pool_coefficients,
    sym_eigen,
)
from hcrlag.hcr import CoeffTensor

from .conftest import gauss_legendre_01


def random_tensor(rng, n_lags=1001, m=10):
    coeffs = rng.standard_normal((n_lags, m + 1, m + 1)) * 0.01
    coeffs[:, 0, 0] = 1.0
    return CoeffTensor(np.arange(n_lags) - n_lags // 2, coeffs, np.full(n_lags, 5000))


def random_symmetric(rng, n):
    x = rng.standard_normal((n, n))
    return 0.5 * (x + x.T)


# -- pooling ------------------------------------------------------------------


def test_pool_shapes(rng):
    t = random_tensor(rng)
    full, idx_full = pool_coefficients(t, "full", marginal_removal=False)
    interior, idx_int = pool_coefficients(t, "interior")
    assert full.shape == (121, 1001) and len(idx_full) == 121
    assert interior.shape == (100, 1001) and idx_int[0] == (1, 1)
    single = CoeffTensor(np.array([0]), t.coeffs[:1], np.array([5000]))
    assert pool_coefficients(single)[0].shape == (100, 1)
    with pytest.raises(ValueError):
        pool_coefficients(t, "diagonal")


def test_pool_values(rng):
    t = random_tensor(rng, n_lags=7, m=3)
    raw, index = pool_coefficients(t, "full", marginal_removal=False)
    for row, (j, k) in enumerate(index):
        np.testing.assert_array_equal(raw[row], t.coeffs[:, j, k])
    cleaned, index = pool_coefficients(t, "interior")
    for row, (j, k) in enumerate(index):
        expected = t.coeffs[:, j, k] - t.coeffs[:, j, 0] * t.coeffs[:, 0, k]
        np.testing.assert_allclose(cleaned[row], expected, rtol=0, atol=1e-15)


# -- covariance ---------------------------------------------------------------


def test_covariance_examples(rng):
    np.testing.assert_allclose(
        covariance_over_lags(np.array([[1.0, 0.0], [0.0, 1.0]])), [[0.25, -0.25], [-0.25, 0.25]], atol=1e-15
    )
    same = np.repeat(rng.standard_normal((4, 1)), 10, axis=1)
    np.testing.assert_allclose(covariance_over_lags(same), 0.0, atol=1e-15)
    x = rng.standard_normal((5, 50))
    c = covariance_over_lags(x)
    assert np.array_equal(c, c.T)
    np.testing.assert_allclose(c, np.cov(x, bias=True), atol=1e-14)
    assert np.linalg.eigvalsh(c).min() >= -1e-12
    np.testing.assert_allclose(covariance_over_lags(x, center=False), x @ x.T / 50, atol=1e-14)
    with pytest.raises(ValueError):
        covariance_over_lags(x[:, :1])


# -- eigen --------------------------------------------------------------------


def test_sym_eigen_examples():
    w, v = sym_eigen(np.eye(3), 3)
    np.testing.assert_allclose(w, 1.0, atol=1e-15)
    w, v = sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]), 2)
    np.testing.assert_allclose(w, [3.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(v[:, 0], [2**-0.5, 2**-0.5], atol=1e-14)


def test_sym_eigen_rejects():
    with pytest.raises(ValueError, match="symmetric"):
        sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)
    with pytest.raises(ValueError):
        sym_eigen(np.eye(3), 0)
    with pytest.raises(ValueError):
        sym_eigen(np.eye(3), 4)


def test_jacobi_residuals_121(rng):
    c = random_symmetric(rng, 121)
    w, v = jacobi_eigh(c)
    norm = np.linalg.norm(c, 2)
    assert np.max(np.linalg.norm(c @ v - v * w, axis=0)) <= 1e-8 * norm
    assert np.max(np.abs(v.T @ v - np.eye(121))) <= 1e-8
    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(c)[::-1], atol=1e-10 * norm)


def test_sign_convention(rng):
    w, v = jacobi_eigh(random_symmetric(rng, 20))
    pivots = np.argmax(np.abs(v), axis=0)
    assert np.all(v[pivots, np.arange(20)] > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_jacobi_matches_lapack(n, seed):
    c = random_symmetric(np.random.default_rng(seed), n)
    w, v = jacobi_eigh(c)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(c)[::-1], atol=1e-10 * max(1.0, np.linalg.norm(c)))
    assert np.max(np.abs(v.T @ v - np.eye(n))) <= 1e-10


def test_jacobi_psd_eigenvalues_nonnegative(rng):
    x = rng.standard_normal((30, 10))
    w, _ = jacobi_eigh(x @ x.T / 10)  # rank 10
    assert np.all(w >= -1e-10)


# -- feature extraction -------------------------------------------------------


def test_coordinate_projection(rng):
    pooled = rng.standard_normal((4, 30))
    v = np.zeros((4, 1))
    v[2, 0] = 1.0
    mean = pooled.mean(axis=1)
    fs = extract_features(pooled, (np.array([1.0]), v), mean)
    np.testing.assert_allclose(fs.curves[0], pooled[2] - mean[2], atol=1e-15)


@pytest.mark.parametrize("center", [True, False])
def test_variance_and_reconstruction(rng, center):
    t = random_tensor(rng, n_lags=301, m=4)
    pooled, index = pool_coefficients(t)
    full = analyze_tensor(t, r=len(index), center=center)
    if center:
        np.testing.assert_allclose(full.curves.var(axis=1), full.eigenvalues, rtol=0, atol=1e-8)
    else:
        np.testing.assert_allclose((full.curves**2).mean(axis=1), full.eigenvalues, rtol=0, atol=1e-8)
    rebuilt = full.eigenvectors @ full.curves + full.mean[:, None]
    np.testing.assert_allclose(rebuilt, pooled, rtol=0, atol=1e-8)
    assert np.all(full.eigenvalues >= -1e-10)
    assert np.all(np.diff(full.eigenvalues) <= 0)


def test_extract_rejects_mismatch(rng):
    with pytest.raises(ValueError):
        extract_features(rng.standard_normal((4, 10)), (np.ones(2), np.eye(3)[:, :2]), None)


def test_analysis_deterministic(rng):
    t = random_tensor(rng, n_lags=101)
    a, b = analyze_tensor(t), analyze_tensor(t)
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()
    assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()
    assert a.curves.tobytes() == b.curves.tobytes()
    assert a.r == 3 and a.m == 10


# -- contribution grids -------------------------------------------------------


def test_grid_constant_and_product():
    index = [(j, k) for j in range(3) for k in range(3)]
    v = np.zeros(9)
    v[0] = 1.0
    g = contribution_grid(v, index, BasisSpec(2))
    assert g.resolution == 101 and g.axis[0] == 0.0 and g.axis[-1] == 1.0
    np.testing.assert_allclose(g.values, 1.0, atol=1e-15)
    v = np.zeros(9)
    v[index.index((1, 1))] = 1.0
    g = contribution_grid(v, index, BasisSpec(2), resolution=51)
    y = g.axis
    np.testing.assert_allclose(g.values, 3 * np.outer(2 * y - 1, 2 * y - 1), rtol=0, atol=1e-12)


def test_grid_rows_follow_y():
    index = [(1, 0)]
    g = contribution_grid(np.array([1.0]), index, BasisSpec(1), resolution=3)
    # f_1(y) varies down the rows, constant along columns
    np.testing.assert_allclose(g.values[:, 0], np.sqrt(3) * np.array([-1.0, 0.0, 1.0]), atol=1e-15)
    np.testing.assert_allclose(g.values[0], g.values[0, 0])


def test_grid_unit_norm(rng):
    x, w = gauss_legendre_01(64)
    index = [(j, k) for j in range(1, 11) for k in range(1, 11)]
    for _ in range(5):
        v = rng.standard_normal(100)
        v /= np.linalg.norm(v)
        # evaluate on quadrature nodes rather than the uniform grid
        f = legendre_rows(x, 10)
        weights = np.zeros((11, 11))
        for c, (j, k) in zip(v, index):
            weights[j, k] = c
        surface = f.T @ weights @ f
        assert float(w @ surface**2 @ w) == pytest.approx(1.0, abs=1e-9)
        g = contribution_grid(v, index, BasisSpec(10), resolution=5)
        np.testing.assert_allclose(g.values[[0, -1]][:, [0, -1]], surface_at_corners(weights), atol=1e-10)


def surface_at_corners(weights):
    f = legendre_rows(np.array([0.0, 1.0]), weights.shape[0] - 1)
    return f.T @ weights @ f


def test_feature_set_to_dict(rng):
    fs = analyze_tensor(random_tensor(rng, n_lags=21, m=2), r=2)
    d = fs.to_dict()
    assert d["r"] == 2 and len(d["eigenvectors"]) == 2 and len(d["feature_curves"][0]) == 21
    assert d["index"][0] == [1, 1]
