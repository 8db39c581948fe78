"""Lagged joint-density coefficients (hierarchical correlation reconstruction).

For two normalized series ``y`` and ``z`` and a lag ``d`` the joint density
of the pairs ``(y[t], z[t+d])`` is modeled as

    rho(y, z) = sum_{j,k <= m} a[j, k] f_j(y) f_k(z),
    a[j, k]   = mean_t f_j(y[t]) f_k(z[t+d]).

Lag convention, used everywhere in the package: a positive lag ``d`` pairs
``y[t]`` with the *later* value ``z[t+d]``.

Every lag uses all valid ``t`` (both indices in range and past both burn-in
prefixes), so the pair count shrinks with ``|d|``.  The sum over ``t`` is a
product of the two precomputed ``(m+1, N)`` basis matrices restricted to
shifted column windows; it is evaluated as BLAS matrix products over
fixed-size column blocks whose partial results are then combined by
pairwise (tree) summation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .basis import BasisMatrix, BasisSpec, eval_basis_matrix, legendre_rows
from .normalize import NormalizedSeries

__all__ = [
    "BLOCK",
    "MIN_OVERLAP",
    "InsufficientOverlap",
    "CoeffMatrix",
    "CoeffTensor",
    "overlap_range",
    "estimate_coeffs",
    "lag_sweep",
    "sweep_basis",
    "remove_marginals",
    "density_eval",
    "pearson_per_lag",
]

BLOCK = 4096
MIN_OVERLAP = 1000


class InsufficientOverlap(ValueError):
    pass


@dataclass(frozen=True)
class CoeffMatrix:
    a: np.ndarray
    pair_count: int

    @property
    def m(self) -> int:
        return self.a.shape[0] - 1


@dataclass
class CoeffTensor:
    """Per-lag coefficient matrices for one ordered pair of series.

    ``coeffs[i]`` is the ``(m+1, m+1)`` matrix at lag ``lags[i]`` (samples).
    """

    lags: np.ndarray
    coeffs: np.ndarray
    pair_counts: np.ndarray
    channels: tuple[str, str] = ("A", "B")
    kinds: tuple[str, str] = ("basic", "basic")
    sample_rate_hz: float = 500.0

    def __post_init__(self) -> None:
        self.lags = np.asarray(self.lags, dtype=np.int64)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        self.pair_counts = np.asarray(self.pair_counts, dtype=np.int64)
        if self.coeffs.ndim != 3 or self.coeffs.shape[1] != self.coeffs.shape[2]:
            raise ValueError(f"coeffs must have shape (L, m+1, m+1), got {self.coeffs.shape}")
        if len(self.lags) != self.coeffs.shape[0] or len(self.pair_counts) != len(self.lags):
            raise ValueError("lags, coeffs and pair_counts disagree in length")
        if len(self.lags) > 1 and np.any(np.diff(self.lags) <= 0):
            raise ValueError("lags must be strictly increasing")

    @property
    def m(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def lags_seconds(self) -> np.ndarray:
        return self.lags / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.lags)

    def at(self, lag: int) -> CoeffMatrix:
        i = int(np.searchsorted(self.lags, lag))
        if i >= len(self.lags) or self.lags[i] != lag:
            raise KeyError(f"lag {lag} not in tensor")
        return CoeffMatrix(self.coeffs[i], int(self.pair_counts[i]))

    # -- serialization ----------------------------------------------------

    def to_csv(self, path: str | Path) -> None:
        """Flat ``lag,j,k,value`` rows, lag-major then ``j``, ``k``."""
        size = self.m + 1
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "j", "k", "value"])
            for lag, mat in zip(self.lags, self.coeffs):
                for j in range(size):
                    for k in range(size):
                        w.writerow([int(lag), j, k, repr(float(mat[j, k]))])

    @classmethod
    def from_csv(cls, path: str | Path, **meta) -> "CoeffTensor":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        lags = sorted({int(r["lag"]) for r in rows})
        size = max(int(r["j"]) for r in rows) + 1
        index = {lag: i for i, lag in enumerate(lags)}
        coeffs = np.full((len(lags), size, size), np.nan)
        for r in rows:
            coeffs[index[int(r["lag"])], int(r["j"]), int(r["k"])] = float(r["value"])
        if np.isnan(coeffs).any():
            raise ValueError(f"{path}: incomplete coefficient table")
        counts = meta.pop("pair_counts", np.zeros(len(lags), dtype=np.int64))
        return cls(np.array(lags), coeffs, counts, **meta)

    def to_bytes(self) -> bytes:
        """Little-endian float64, row-major ``(j, k)`` within each lag, lags in order."""
        return np.ascontiguousarray(self.coeffs, dtype="<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, lags: Sequence[int], m: int, **meta) -> "CoeffTensor":
        coeffs = np.frombuffer(data, dtype="<f8").reshape(len(lags), m + 1, m + 1).astype(np.float64)
        counts = meta.pop("pair_counts", np.zeros(len(lags), dtype=np.int64))
        return cls(np.asarray(lags), coeffs, counts, **meta)


def overlap_range(len_y: int, len_z: int, offset: int, burn_y: int = 0, burn_z: int = 0) -> tuple[int, int]:
    """Half-open range of ``t`` for which ``(y[t], z[t+offset])`` is a valid pair."""
    t0 = max(burn_y, burn_z - offset, 0)
    t1 = min(len_y, len_z - offset)
    return t0, max(t0, t1)


def _tree_sum(parts: list[np.ndarray]) -> np.ndarray:
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _mixed_sum(fy: np.ndarray, fz: np.ndarray) -> np.ndarray:
    n = fy.shape[1]
    parts = [fy[:, s : s + BLOCK] @ fz[:, s : s + BLOCK].T for s in range(0, n, BLOCK)]
    return _tree_sum(parts)


def estimate_coeffs(
    fy: BasisMatrix,
    fz: BasisMatrix,
    offset: int,
    min_overlap: int = MIN_OVERLAP,
) -> CoeffMatrix:
    """Mixed moments of ``(y[t], z[t+offset])`` over every valid ``t``.

    Raises
    ------
    InsufficientOverlap
        If fewer than ``min_overlap`` pairs remain after shifting and
        discarding burn-in samples.
    """
    if fy.rows.shape[0] != fz.rows.shape[0]:
        raise ValueError("basis matrices have different degrees")
    t0, t1 = overlap_range(fy.source_length, fz.source_length, offset, fy.burn_in, fz.burn_in)
    n = t1 - t0
    if n < max(min_overlap, 1):
        raise InsufficientOverlap(f"only {n} overlapping pairs at offset {offset} (need {min_overlap})")
    s = _mixed_sum(fy.rows[:, t0:t1], fz.rows[:, t0 + offset : t1 + offset])
    return CoeffMatrix(s / n, n)


def sweep_basis(
    fy: BasisMatrix,
    fz: BasisMatrix,
    lags: Sequence[int],
    min_overlap: int = MIN_OVERLAP,
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients for every lag in ``lags``; returns ``(coeffs, pair_counts)``."""
    size = fy.rows.shape[0]
    coeffs = np.empty((len(lags), size, size))
    counts = np.empty(len(lags), dtype=np.int64)
    for i, lag in enumerate(lags):
        c = estimate_coeffs(fy, fz, int(lag), min_overlap)
        coeffs[i] = c.a
        counts[i] = c.pair_count
    return coeffs, counts


def lag_sweep(
    series_a: NormalizedSeries,
    series_b: NormalizedSeries,
    spec: BasisSpec = BasisSpec(),
    min_offset: int | None = None,
    max_offset: int | None = None,
    *,
    channels: tuple[str, str] = ("A", "B"),
    sample_rate_hz: float = 500.0,
    min_overlap: int = MIN_OVERLAP,
) -> CoeffTensor:
    """Estimate coefficients for every integer lag in ``[min_offset, max_offset]``.

    Passing the same object twice requests an autocorrelation sweep, whose
    default range is ``1..500`` and which rejects ``min_offset < 1``.  Cross
    pairs default to ``-500..500``.
    """
    auto = series_a is series_b
    if max_offset is None:
        max_offset = 500
    if min_offset is None:
        min_offset = 1 if auto else -max_offset
    if auto and min_offset < 1:
        raise ValueError("autocorrelation sweeps must start at lag >= 1")
    if min_offset > max_offset:
        raise ValueError(f"empty lag range [{min_offset}, {max_offset}]")
    fy = eval_basis_matrix(series_a, spec)
    fz = fy if auto else eval_basis_matrix(series_b, spec)
    lags = np.arange(min_offset, max_offset + 1)
    coeffs, counts = sweep_basis(fy, fz, lags, min_overlap)
    return CoeffTensor(
        lags, coeffs, counts, channels=channels, kinds=(series_a.kind, series_b.kind), sample_rate_hz=sample_rate_hz
    )


def remove_marginals(c: CoeffMatrix) -> CoeffMatrix:
    """Subtract the product-of-marginals part: ``a[j,k] - a[j,0] a[0,k]`` for ``j,k >= 1``."""
    a = np.array(c.a, copy=True)
    a[1:, 1:] -= np.outer(c.a[1:, 0], c.a[0, 1:])
    return CoeffMatrix(a, c.pair_count)


def density_eval(c: CoeffMatrix, y, z):
    """Polynomial density model at ``(y, z)``; may be negative.

    Scalars give a float; equal-shaped arrays give an array.
    """
    y_arr = np.asarray(y, dtype=np.float64)
    z_arr = np.asarray(z, dtype=np.float64)
    fy = legendre_rows(y_arr.ravel(), c.m)
    fz = legendre_rows(z_arr.ravel(), c.m)
    out = np.einsum("jt,jk,kt->t", fy, c.a, fz)
    if y_arr.ndim == 0:
        return float(out[0])
    return out.reshape(y_arr.shape)


def pearson_per_lag(
    y: NormalizedSeries,
    z: NormalizedSeries,
    lags: Sequence[int],
    min_overlap: int = MIN_OVERLAP,
) -> np.ndarray:
    """Pearson correlation of ``(y[t], z[t+lag])`` over the same pairs the coefficients use."""
    yv, zv = y.values, z.values
    out = np.empty(len(lags))
    for i, lag in enumerate(lags):
        t0, t1 = overlap_range(len(yv), len(zv), int(lag), y.burn_in, z.burn_in)
        if t1 - t0 < max(min_overlap, 2):
            raise InsufficientOverlap(f"only {t1 - t0} overlapping pairs at offset {lag}")
        a = yv[t0:t1] - yv[t0:t1].mean()
        b = zv[t0 + lag : t1 + lag] - zv[t0 + lag : t1 + lag].mean()
        out[i] = float(a @ b) / np.sqrt(float(a @ a) * float(b @ b))
    return out
