"""Density-based multi-feature Granger causality.

The earlier ("reason") series is basic-normalized, the later ("result")
series is p-normalized, so its self-predictable part is already removed.
Any remaining distortion of the joint density of ``(reason[t],
result[t+d])`` from uniform is dependence the result's own past could not
explain.  The distortion over delays ``d >= 0`` is reduced by PCA (interior
coefficients, marginals removed), and ``sqrt(sum_i a_i(d)^2)`` summarizes
it as one score per delay.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .basis import BasisMatrix, BasisSpec, eval_basis_matrix
from .errors import StageError
from .features import FeatureSet, analyze_tensor
from .hcr import MIN_OVERLAP, CoeffTensor, sweep_basis
from .normalize import NormalizedSeries, PNormConfig, PNormFit, gauss_normalize, p_normalize
from .signal_io import Recording

__all__ = [
    "CausalityCurve",
    "CausalityMap",
    "causal_lag_sweep",
    "causality_score",
    "causal_curve",
    "pairwise_causality_map",
]


@dataclass(frozen=True)
class CausalityCurve:
    reason: str
    result: str
    delays: np.ndarray
    scores: np.ndarray
    features: FeatureSet

    def score_at(self, delay: int) -> float:
        i = np.flatnonzero(self.delays == delay)
        if i.size == 0:
            raise KeyError(f"delay {delay} not evaluated")
        return float(self.scores[i[0]])


@dataclass
class CausalityMap:
    """Scores for every ordered channel pair at the requested delays."""

    channels: tuple[str, ...]
    delays: np.ndarray
    scores: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)
    curves: dict[tuple[str, str], CausalityCurve] = field(default_factory=dict)
    normalization: dict[str, PNormFit] = field(default_factory=dict)

    @property
    def max_per_delay(self) -> np.ndarray:
        if not self.scores:
            return np.zeros(len(self.delays))
        return np.max(np.vstack(list(self.scores.values())), axis=0)

    def matrix(self, delay: int) -> np.ndarray:
        """``M[i, k]`` = score of reason ``channels[i]`` -> result ``channels[k]``; NaN diagonal."""
        col = int(np.flatnonzero(self.delays == delay)[0])
        n = len(self.channels)
        out = np.full((n, n), np.nan)
        for (a, b), s in self.scores.items():
            out[self.channels.index(a), self.channels.index(b)] = s[col]
        return out


def _sweep(reason: NormalizedSeries, result: BasisMatrix | NormalizedSeries, spec: BasisSpec, max_delay: int,
           min_overlap: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fy = eval_basis_matrix(reason, spec)
    fz = result if isinstance(result, BasisMatrix) else eval_basis_matrix(result, spec)
    delays = np.arange(0, max_delay + 1)
    coeffs, counts = sweep_basis(fy, fz, delays, min_overlap)
    return delays, coeffs, counts


def causal_lag_sweep(
    reason: Sequence[float],
    result: Sequence[float],
    spec: BasisSpec = BasisSpec(),
    max_delay: int = 500,
    *,
    pnorm: PNormConfig | None = None,
    channels: tuple[str, str] = ("A", "B"),
    sample_rate_hz: float = 500.0,
    min_overlap: int = MIN_OVERLAP,
) -> tuple[CoeffTensor, PNormFit]:
    """Coefficient tensor over delays ``0..max_delay`` for reason -> result.

    Returns the tensor and the result series' p-normalization fit.
    """
    if max_delay < 1:
        raise ValueError("max_delay must be at least 1")
    try:
        y = gauss_normalize(reason)
    except ValueError as exc:
        raise StageError("gauss_normalize", str(exc)) from exc
    fit = p_normalize(result, pnorm)
    delays, coeffs, counts = _sweep(y, fit.series, spec, max_delay, min_overlap)
    tensor = CoeffTensor(delays, coeffs, counts, channels=channels, kinds=("basic", "predicted"),
                         sample_rate_hz=sample_rate_hz)
    return tensor, fit


def causality_score(features: FeatureSet) -> np.ndarray:
    """``sqrt(sum_i a_i(d)^2)`` per delay."""
    return np.sqrt(np.sum(np.asarray(features.curves) ** 2, axis=0))


def causal_curve(
    tensor: CoeffTensor,
    r: int = 3,
    *,
    center: bool = True,
    mode: str = "interior",
    marginal_removal: bool = True,
) -> CausalityCurve:
    features = analyze_tensor(tensor, r=r, mode=mode, center=center, marginal_removal=marginal_removal)
    return CausalityCurve(
        reason=tensor.channels[0],
        result=tensor.channels[1],
        delays=tensor.lags.copy(),
        scores=causality_score(features),
        features=features,
    )


def pairwise_causality_map(
    rec: Recording,
    delays: Sequence[int],
    spec: BasisSpec = BasisSpec(),
    r: int = 3,
    *,
    max_delay: int | None = None,
    pnorm: PNormConfig | None = None,
    center: bool = True,
    mode: str = "interior",
    marginal_removal: bool = True,
    workers: int = 1,
    min_overlap: int = MIN_OVERLAP,
) -> CausalityMap:
    """Causality scores for every ordered channel pair.

    PCA for each pair runs over all delays ``0..max_delay`` (default: the
    largest requested delay); scores are then read off at ``delays``.  Each
    channel is normalized once per role and reused across pairs.
    """
    if len(rec.channels) < 2:
        raise ValueError("causality map needs at least 2 channels")
    delays = np.asarray(sorted(set(int(d) for d in delays)))
    if delays.size == 0 or delays[0] < 0:
        raise ValueError("delays must be a nonempty list of nonnegative integers")
    top = int(max_delay if max_delay is not None else max(int(delays[-1]), 1))
    if top < delays[-1]:
        raise ValueError("max_delay below the largest requested delay")

    basic: dict[str, NormalizedSeries] = {}
    fits: dict[str, PNormFit] = {}
    for name in rec.channels:
        try:
            basic[name] = gauss_normalize(rec.channel(name))
        except ValueError as exc:
            raise StageError(f"gauss_normalize[{name}]", str(exc)) from exc
        try:
            fits[name] = p_normalize(rec.channel(name), pnorm)
        except StageError as exc:
            raise StageError(f"p_normalize[{name}]/{exc.stage}", str(exc)) from exc
    result_basis = {name: eval_basis_matrix(fits[name].series, spec) for name in rec.channels}

    pairs = [(a, b) for a in rec.channels for b in rec.channels if a != b]

    def run(pair: tuple[str, str]) -> CausalityCurve:
        a, b = pair
        d, coeffs, counts = _sweep(basic[a], result_basis[b], spec, top, min_overlap)
        tensor = CoeffTensor(d, coeffs, counts, channels=pair, kinds=("basic", "predicted"),
                             sample_rate_hz=rec.sample_rate_hz)
        return causal_curve(tensor, r, center=center, mode=mode, marginal_removal=marginal_removal)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            curves = list(pool.map(run, pairs))
    else:
        curves = [run(p) for p in pairs]

    out = CausalityMap(channels=rec.channels, delays=delays, normalization=fits)
    for pair, curve in zip(pairs, curves):
        out.curves[pair] = curve
        out.scores[pair] = curve.scores[delays]
    return out
