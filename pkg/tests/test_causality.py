import math

import numpy as np
import pytest

from hcrlag.basis import BasisSpec
from hcrlag.causality import (
    causal_curve,
    causal_lag_sweep,
    causality_score,
    pairwise_causality_map,
)
from hcrlag.errors import StageError
from hcrlag.features import FeatureSet
from hcrlag.hcr import pearson_per_lag
from hcrlag.normalize import gauss_normalize

from .conftest import synth

N = 100_000
SOURCE = {"name": "A", "terms": [{"type": "iid-gaussian"}]}


def variance_coupled(n, seed, lag=100):
    spec = [SOURCE, {"name": "B", "terms": [{"type": "variance-coupling", "source": "A", "lag": lag, "gain": 1.0}]}]
    return synth(spec, n, seed=seed)


def feature_set(curves):
    curves = np.asarray(curves, dtype=float)
    r, n = curves.shape
    return FeatureSet(np.ones(r), np.eye(r), curves, tuple((i + 1, 1) for i in range(r)), np.zeros(r), np.arange(n))


@pytest.fixture(scope="module")
def coupled():
    rec = variance_coupled(N, seed=71)
    tensor, fit = causal_lag_sweep(rec.channel("A"), rec.channel("B"), BasisSpec(10), 500)
    return rec, tensor, fit


def test_sweep_shape_and_kinds(coupled):
    _, tensor, fit = coupled
    assert tensor.lags[0] == 0 and tensor.lags[-1] == 500
    assert tensor.kinds == ("basic", "predicted")
    # burn-in of the result series is excluded from every delay
    assert tensor.pair_counts[0] == N - fit.series.burn_in


def test_variance_coupling_loads_even_moments(coupled):
    _, tensor, _ = coupled
    a = tensor.at(100).a
    assert max(abs(a[1, 2]), abs(a[2, 2])) > 10 / math.sqrt(N)


def test_score_peaks_at_injected_delay(coupled):
    rec, tensor, _ = coupled
    curve = causal_curve(tensor, 3)
    assert abs(int(curve.delays[np.argmax(curve.scores)]) - 100) <= 5
    assert np.all(curve.scores >= 0)
    np.testing.assert_allclose(curve.scores, np.sqrt((curve.features.curves**2).sum(axis=0)), rtol=0, atol=0)
    # linear correlation does not see the coupling
    r = pearson_per_lag(gauss_normalize(rec.channel("A")), gauss_normalize(rec.channel("B")), [100])
    assert abs(r[0]) < 0.02


def test_independent_channels_null():
    rng = np.random.default_rng(72)
    a, b = rng.standard_normal((2, N))
    tensor, _ = causal_lag_sweep(a, b, BasisSpec(10), 200)
    inner = tensor.coeffs[:, 1:, 1:]
    assert np.max(np.abs(inner)) <= 5 / math.sqrt(N)
    curve = causal_curve(tensor, 3)
    assert np.all(curve.scores < 0.05)


def test_short_result_names_stage():
    rng = np.random.default_rng(73)
    with pytest.raises(StageError) as info:
        causal_lag_sweep(rng.standard_normal(400), rng.standard_normal(400), BasisSpec(4), 10)
    assert "p_normalize" in info.value.stage
    assert str(info.value).startswith(info.value.stage)


def test_score_examples():
    assert np.all(causality_score(feature_set(np.zeros((3, 5)))) == 0.0)
    s = causality_score(feature_set([[0.0, 3.0], [0.0, 4.0]]))
    assert s[1] == 5.0 and s[0] == 0.0


def test_null_calibration_scales_as_inverse_sqrt_n():
    scaled = []
    for n in (10_000, 40_000, 160_000):
        rng = np.random.default_rng(74 + n)
        a, b = rng.standard_normal((2, n))
        tensor, _ = causal_lag_sweep(a, b, BasisSpec(10), 500)
        scaled.append(np.quantile(causal_curve(tensor, 3).scores, 0.99) * math.sqrt(n))
    assert max(scaled) / min(scaled) <= 1.5


def test_two_wave_separation():
    spec = [
        SOURCE,
        {
            "name": "B",
            "terms": [
                {"type": "lagged-copy", "source": "A", "lag": 50, "gain": 0.4, "noise_sd": 1.0},
                {"type": "variance-coupling", "source": "A", "lag": 200, "gain": 1.0, "base_sd": 0.0},
            ],
        },
    ]
    rec = synth(spec, N, seed=75)
    tensor, _ = causal_lag_sweep(rec.channel("A"), rec.channel("B"), BasisSpec(10), 500)
    curve = causal_curve(tensor, 3)
    peaks = curve.delays[np.argmax(np.abs(curve.features.curves), axis=1)]
    assert any(abs(p - 50) <= 5 for p in peaks)
    assert any(abs(p - 200) <= 5 for p in peaks)
    assert len(set(peaks.tolist())) >= 2


# -- pairwise map -------------------------------------------------------------

LAGGED = [SOURCE, {"name": "B", "terms": [{"type": "lagged-copy", "source": "A", "lag": 100, "gain": 1.0, "noise_sd": 1.0}]}]


@pytest.fixture(scope="module")
def lagged_map():
    rec = synth(LAGGED, 40_000, seed=76)
    return rec, pairwise_causality_map(rec, [0, 50, 100], BasisSpec(6), 3, max_delay=150)


def test_map_entries_and_asymmetry(lagged_map):
    rec, cmap = lagged_map
    assert set(cmap.scores) == {("A", "B"), ("B", "A")}
    forward = cmap.curves["A", "B"].score_at(100)
    backward = cmap.curves["B", "A"].score_at(100)
    assert forward >= 3 * backward
    m = cmap.matrix(100)
    assert np.isnan(m[0, 0]) and np.isnan(m[1, 1]) and m[0, 1] == forward
    np.testing.assert_array_equal(cmap.max_per_delay, np.maximum(cmap.scores["A", "B"], cmap.scores["B", "A"]))
    assert set(cmap.normalization) == {"A", "B"}


def test_map_reproducible(lagged_map):
    rec, cmap = lagged_map
    again = pairwise_causality_map(rec, [0, 50, 100], BasisSpec(6), 3, max_delay=150, workers=2)
    for key in cmap.scores:
        assert cmap.scores[key].tobytes() == again.scores[key].tobytes()


def test_map_rejects():
    rec = synth([SOURCE], 2000, seed=0)
    with pytest.raises(ValueError):
        pairwise_causality_map(rec, [0])
    rec = synth(LAGGED, 2000, seed=0)
    with pytest.raises(ValueError):
        pairwise_causality_map(rec, [])
    with pytest.raises(ValueError):
        pairwise_causality_map(rec, [10], max_delay=5)
