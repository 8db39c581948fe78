import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hcrlag.basis import BasisSpec, eval_basis_matrix, legendre
from hcrlag.hcr import (
    CoeffMatrix,
    CoeffTensor,
    InsufficientOverlap,
    density_eval,
    estimate_coeffs,
    lag_sweep,
    pearson_per_lag,
    remove_marginals,
)
from hcrlag.normalize import NormalizedSeries, gauss_normalize

from .conftest import synth

N = 100_000
BOUND = 5 / math.sqrt(N)


def naive_coeffs(y, z, offset, m):
    """Direct double loop over pairs with exactly rounded sums."""
    pairs = [(y[t], z[t + offset]) for t in range(len(y)) if 0 <= t + offset < len(z)]
    out = np.empty((m + 1, m + 1))
    for j in range(m + 1):
        for k in range(m + 1):
            out[j, k] = math.fsum(legendre(j, a) * legendre(k, b) for a, b in pairs) / len(pairs)
    return out


def basis(values, m=10, burn_in=0):
    return eval_basis_matrix(NormalizedSeries(values, burn_in=burn_in), BasisSpec(m))


def test_matches_naive_reference(rng):
    y, z = rng.uniform(size=1200), rng.uniform(size=1200)
    for offset in (-3, 0, 7):
        c = estimate_coeffs(basis(y), basis(z), offset, min_overlap=100)
        assert np.max(np.abs(c.a - naive_coeffs(y, z, offset, 10))) <= 1e-12


def test_same_series_gives_identity(rng):
    y = rng.uniform(size=N)
    by = basis(y)
    c = estimate_coeffs(by, by, 0)
    assert c.a[0, 0] == 1.0
    assert np.max(np.abs(c.a - np.eye(11))) <= BOUND
    assert c.pair_count == N


def test_independent_series(rng):
    c = estimate_coeffs(basis(rng.uniform(size=N)), basis(rng.uniform(size=N)), 0)
    off = c.a.copy()
    assert off[0, 0] == 1.0
    off[0, 0] = 0.0
    assert np.max(np.abs(off)) <= BOUND


def test_marginal_entries_match_single_series_moments(rng):
    y, z = rng.uniform(size=5000) ** 2, rng.uniform(size=5000)
    by, bz = basis(y, burn_in=30), basis(z, burn_in=0)
    c = estimate_coeffs(by, bz, 12)
    t = np.arange(30, 5000 - 12)
    np.testing.assert_allclose(c.a[:, 0], by.rows[:, t].mean(axis=1), atol=1e-12, rtol=0)
    np.testing.assert_allclose(c.a[0, :], bz.rows[:, t + 12].mean(axis=1), atol=1e-12, rtol=0)
    bound = np.sqrt(np.outer(2 * np.arange(11) + 1, 2 * np.arange(11) + 1))
    assert np.all(np.abs(c.a) <= bound)


def test_overlap_and_burn_in(rng):
    y = basis(rng.uniform(size=3000), burn_in=100)
    z = basis(rng.uniform(size=3000), burn_in=500)
    c = estimate_coeffs(y, z, 50)
    # t >= 100, t + 50 >= 500, t + 50 < 3000
    assert c.pair_count == (3000 - 50) - 450
    with pytest.raises(InsufficientOverlap):
        estimate_coeffs(y, z, 2000)


def test_lag_sweep_finds_injected_lag():
    rec = synth(
        [
            {"name": "a", "terms": [{"type": "iid-gaussian"}]},
            {"name": "b", "terms": [{"type": "lagged-copy", "source": "a", "lag": 100, "gain": 1.0, "noise_sd": 0.1}]},
        ],
        20_000,
        seed=61,
    )
    ya, yb = gauss_normalize(rec.channel("a")), gauss_normalize(rec.channel("b"))
    tensor = lag_sweep(ya, yb, BasisSpec(10), -150, 150)
    assert tensor.coeffs.shape == (301, 11, 11)
    assert tensor.lags[np.argmax(np.abs(tensor.coeffs[:, 1, 1]))] == 100


def test_lag_sweep_transpose_identity(rng):
    ya = NormalizedSeries(rng.uniform(size=4000))
    yb = NormalizedSeries(rng.uniform(size=4000))
    ab = lag_sweep(ya, yb, BasisSpec(6), -40, 40)
    ba = lag_sweep(yb, ya, BasisSpec(6), -40, 40)
    for i, lag in enumerate(ab.lags):
        j = int(np.flatnonzero(ba.lags == -lag)[0])
        assert np.array_equal(ab.coeffs[i], ba.coeffs[j].T)


def test_lag_sweep_defaults(rng):
    y = NormalizedSeries(rng.uniform(size=3000))
    z = NormalizedSeries(rng.uniform(size=3000))
    assert len(lag_sweep(y, z, BasisSpec(2))) == 1001
    auto = lag_sweep(y, y, BasisSpec(2))
    assert auto.lags[0] == 1 and auto.lags[-1] == 500
    with pytest.raises(ValueError):
        lag_sweep(y, y, BasisSpec(2), 0, 10)


def test_lag_sweep_iid_bounded():
    rng = np.random.default_rng(62)
    y = NormalizedSeries(rng.uniform(size=N))
    z = NormalizedSeries(rng.uniform(size=N))
    tensor = lag_sweep(y, z, BasisSpec(10), -20, 20)
    inner = tensor.coeffs.copy()
    inner[:, 0, 0] = 0.0
    bound = 5 / np.sqrt(tensor.pair_counts)
    assert np.all(np.abs(inner).max(axis=(1, 2)) <= bound)


# -- marginal removal ---------------------------------------------------------


def test_remove_marginals_arithmetic():
    a = np.zeros((3, 3))
    a[0, 0], a[1, 1], a[1, 0], a[0, 1] = 1.0, 0.5, 0.2, 0.3
    out = remove_marginals(CoeffMatrix(a, 10))
    assert out.a[1, 1] == pytest.approx(0.44, abs=1e-15)
    np.testing.assert_array_equal(out.a[0], a[0])
    np.testing.assert_array_equal(out.a[:, 0], a[:, 0])


@given(arrays(np.float64, (4, 4), elements=st.floats(-2, 2)))
def test_remove_marginals_identity_without_marginals(a):
    a = a.copy()
    a[0, :] = 0.0
    a[:, 0] = 0.0
    a[0, 0] = 1.0
    np.testing.assert_array_equal(remove_marginals(CoeffMatrix(a, 1)).a, a)


def test_remove_marginals_non_uniform_independent():
    rng = np.random.default_rng(63)
    u = rng.uniform(size=N)
    y = u**2  # non-uniform marginal
    z = rng.uniform(size=N) ** 3
    c = estimate_coeffs(basis(y), basis(z), 0)
    raw = np.abs(c.a[1:, 1:]).max()
    cleaned = np.abs(remove_marginals(c).a[1:, 1:]).max()
    assert raw > 10 * BOUND  # marginal products dominate before removal
    assert cleaned <= BOUND


# -- density model ------------------------------------------------------------


def test_density_constant_term():
    a = np.zeros((5, 5))
    a[0, 0] = 1.0
    c = CoeffMatrix(a, 1)
    g = np.linspace(0, 1, 7)
    Y, Z = np.meshgrid(g, g)
    np.testing.assert_allclose(density_eval(c, Y, Z), 1.0, atol=1e-15)
    assert density_eval(c, 0.2, 0.9) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        density_eval(c, 1.2, 0.5)


@settings(max_examples=25)
@given(arrays(np.float64, (6, 6), elements=st.floats(-1, 1)))
def test_density_integrates_to_one(a):
    a = a.copy()
    a[0, 0] = 1.0
    from .conftest import gauss_legendre_01

    x, w = gauss_legendre_01(64)
    Y, Z = np.meshgrid(x, x, indexing="ij")
    rho = density_eval(CoeffMatrix(a, 1), Y, Z)
    assert float(w @ rho @ w) == pytest.approx(1.0, abs=1e-9)


def test_density_recovered_from_samples():
    # rejection sampling from rho = 1 + 0.3 f1(y) f1(z); max density 1.9
    rng = np.random.default_rng(64)
    true = lambda y, z: 1 + 0.3 * 3 * (2 * y - 1) * (2 * z - 1)  # noqa: E731
    ys, zs = [], []
    while len(ys) < N:
        y, z, u = rng.uniform(size=(3, 2 * N))
        keep = u * 1.9 < true(y, z)
        ys.extend(y[keep])
        zs.extend(z[keep])
    y, z = np.array(ys[:N]), np.array(zs[:N])
    c = estimate_coeffs(basis(y, m=1), basis(z, m=1), 0)
    g = np.linspace(0.05, 0.95, 10)
    Y, Z = np.meshgrid(g, g, indexing="ij")
    assert np.max(np.abs(density_eval(c, Y, Z) - true(Y, Z))) <= 0.05


# -- serialization ------------------------------------------------------------


def test_tensor_csv_and_binary_round_trip(tmp_path, rng):
    coeffs = rng.standard_normal((3, 4, 4))
    t = CoeffTensor(np.array([-1, 0, 2]), coeffs, np.array([10, 11, 12]))
    p = tmp_path / "t.csv"
    t.to_csv(p)
    back = CoeffTensor.from_csv(p)
    np.testing.assert_array_equal(back.coeffs, coeffs)
    np.testing.assert_array_equal(back.lags, t.lags)
    raw = t.to_bytes()
    assert len(raw) == 3 * 16 * 8
    assert np.frombuffer(raw[:8], "<f8")[0] == coeffs[0, 0, 0]
    assert np.frombuffer(raw[8:16], "<f8")[0] == coeffs[0, 0, 1]  # k varies fastest
    again = CoeffTensor.from_bytes(raw, [-1, 0, 2], 3)
    np.testing.assert_array_equal(again.coeffs, coeffs)


def test_tensor_rejects_unsorted_lags():
    with pytest.raises(ValueError):
        CoeffTensor(np.array([1, 0]), np.zeros((2, 2, 2)), np.array([1, 1]))


def test_pearson_per_lag(rng):
    a = rng.standard_normal(5000)
    b = np.roll(a, 3) + 0.5 * rng.standard_normal(5000)
    ya, yb = gauss_normalize(a), gauss_normalize(b)
    r = pearson_per_lag(ya, yb, [0, 3], min_overlap=10)
    direct = np.corrcoef(ya.values[:-3], yb.values[3:])[0, 1]
    assert r[1] == pytest.approx(direct, abs=1e-12)
    assert abs(r[0]) < 0.1
