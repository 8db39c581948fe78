"""Orthonormal shifted Legendre polynomials on [0, 1].

``f_j(x) = sqrt(2j + 1) * P_j(2x - 1)`` with ``P_j`` the Legendre
polynomials, so that ``int_0^1 f_j f_k = delta_jk``.  Values come from the
three-term recurrence ``(n+1) P_{n+1} = (2n+1) u P_n - n P_{n-1}``; expanded
monomial coefficients lose several digits at degree 10 and are not used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .normalize import NormalizedSeries

__all__ = ["MAX_DEGREE", "BasisSpec", "BasisMatrix", "legendre", "legendre_rows", "eval_basis_matrix"]

MAX_DEGREE = 30


@dataclass(frozen=True)
class BasisSpec:
    m: int = 10

    def __post_init__(self) -> None:
        if not 1 <= self.m <= MAX_DEGREE:
            raise ValueError(f"basis degree m must lie in [1, {MAX_DEGREE}], got {self.m}")

    @property
    def size(self) -> int:
        return self.m + 1


@dataclass(frozen=True)
class BasisMatrix:
    """``rows[j, t] = f_j(y_t)``; ``burn_in`` is carried over from the series."""

    rows: np.ndarray
    burn_in: int = 0

    @property
    def m(self) -> int:
        return self.rows.shape[0] - 1

    @property
    def source_length(self) -> int:
        return self.rows.shape[1]


def legendre_rows(x, m: int) -> np.ndarray:
    """Evaluate ``f_0 .. f_m`` at every point of ``x``; shape ``(m+1, len(x))``."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if m < 0 or m > MAX_DEGREE:
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}], got {m}")
    if np.any((x < 0.0) | (x > 1.0)) or not np.all(np.isfinite(x)):
        raise ValueError("Legendre basis arguments must lie in [0, 1]")
    u = 2.0 * x - 1.0
    out = np.empty((m + 1, x.size))
    out[0] = 1.0
    if m >= 1:
        out[1] = u
    for n in range(1, m):
        out[n + 1] = ((2 * n + 1) * u * out[n] - n * out[n - 1]) / (n + 1)
    out *= np.sqrt(2.0 * np.arange(m + 1) + 1.0)[:, None]
    return out


def legendre(j: int, x: float) -> float:
    """Orthonormal shifted Legendre polynomial ``f_j`` at ``x`` in [0, 1]."""
    if not (isinstance(j, (int, np.integer)) and 0 <= j <= MAX_DEGREE):
        raise ValueError(f"degree must be an integer in [0, {MAX_DEGREE}], got {j}")
    if not (math.isfinite(x) and 0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return float(legendre_rows([x], int(j))[j, 0])


def eval_basis_matrix(series: NormalizedSeries, spec: BasisSpec = BasisSpec()) -> BasisMatrix:
    rows = legendre_rows(series.values, spec.m)
    rows.setflags(write=False)
    return BasisMatrix(rows=rows, burn_in=series.burn_in)
