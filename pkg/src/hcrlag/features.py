"""PCA reduction of lag-indexed coefficient tensors.

The per-lag coefficient vectors of one pair are pooled into a
``(P, L)`` matrix (P coefficients, L lags), their covariance across lags is
diagonalized, and the dominant eigenvectors ``v`` define

* feature curves ``a_v(lag) = v . (a(lag) - mean)``, whose variance over
  lags is the eigenvalue, and
* contribution surfaces ``f_v(y, z) = sum_{jk} v_jk f_j(y) f_k(z)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import BasisSpec, legendre_rows
from .hcr import CoeffMatrix, CoeffTensor, remove_marginals

__all__ = [
    "FeatureSet",
    "DensityGrid",
    "pool_coefficients",
    "covariance_over_lags",
    "jacobi_eigh",
    "sym_eigen",
    "extract_features",
    "contribution_grid",
    "analyze_tensor",
]

Index = list[tuple[int, int]]


@dataclass(frozen=True)
class FeatureSet:
    eigenvalues: np.ndarray  # (r,)
    eigenvectors: np.ndarray  # (P, r), columns
    curves: np.ndarray  # (r, L)
    index: tuple[tuple[int, int], ...]
    mean: np.ndarray  # (P,), zeros when uncentered
    lags: np.ndarray
    sample_rate_hz: float = 500.0
    centered: bool = True

    @property
    def r(self) -> int:
        return len(self.eigenvalues)

    @property
    def m(self) -> int:
        return max(max(jk) for jk in self.index)

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "centered": self.centered,
            "eigenvalues": self.eigenvalues.tolist(),
            "eigenvectors": self.eigenvectors.T.tolist(),
            "index": [list(jk) for jk in self.index],
            "mean": self.mean.tolist(),
            "feature_curves": self.curves.tolist(),
        }


@dataclass(frozen=True)
class DensityGrid:
    """``values[i, k] = f_v(axis[i], axis[k])``: rows follow ``y``, columns ``z``."""

    values: np.ndarray

    @property
    def resolution(self) -> int:
        return self.values.shape[0]

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.resolution)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g")


def pool_coefficients(
    tensor: CoeffTensor,
    mode: str = "interior",
    marginal_removal: bool = True,
) -> tuple[np.ndarray, Index]:
    """Stack per-lag coefficients into a ``(P, L)`` matrix.

    ``interior`` keeps the ``m*m`` entries with ``j, k >= 1``; ``full`` keeps
    all ``(m+1)^2``.  With ``marginal_removal`` the interior entries are
    replaced by ``a[j,k] - a[j,0] a[0,k]`` first (row and column 0 are
    unaffected).  Returns the matrix and the ``(j, k)`` of each row.
    """
    size = tensor.m + 1
    if mode == "interior":
        index = [(j, k) for j in range(1, size) for k in range(1, size)]
    elif mode == "full":
        index = [(j, k) for j in range(size) for k in range(size)]
    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    coeffs = tensor.coeffs
    if marginal_removal:
        coeffs = np.stack([remove_marginals(CoeffMatrix(c, 0)).a for c in coeffs]) if len(coeffs) else coeffs
    jj = np.array([j for j, _ in index])
    kk = np.array([k for _, k in index])
    pooled = coeffs[:, jj, kk].T.copy()
    return pooled, index


def covariance_over_lags(pooled: np.ndarray, center: bool = True) -> np.ndarray:
    """``(1/L) sum_lags (a - mean)(a - mean)^T``; second moments if not ``center``."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if pooled.ndim != 2 or pooled.shape[1] < 2:
        raise ValueError("need a (P, L) matrix with at least 2 lags")
    x = pooled - pooled.mean(axis=1, keepdims=True) if center else pooled
    c = x @ x.T / pooled.shape[1]
    return 0.5 * (c + c.T)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: each round pairs every index once; rounds cover all pairs."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a >= 0 and b >= 0:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(c: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order: each round annihilates
    ``n/2`` disjoint off-diagonal entries at once, which keeps the update
    vectorized.  Iterates until the off-diagonal Frobenius norm is at most
    ``tol`` times the Frobenius norm of ``c``.

    Returns eigenvalues in descending order and eigenvectors as columns,
    each column's largest-magnitude entry made positive.
    """
    a = np.array(c, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("matrix must be square")
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n > 1 and norm > 0:
        rounds = _round_robin(n)
        target = tol * norm
        for _ in range(max_sweeps):
            off = float(np.linalg.norm(a - np.diag(np.diag(a))))
            if off <= target:
                break
            for p, q in rounds:
                apq = a[p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                p, q, apq = p[active], q[active], apq[active]
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * cs
                # A <- A J (columns), then A <- J^T A (rows), V <- V J
                ap, aq = a[:, p].copy(), a[:, q]
                a[:, p] = cs * ap - sn * aq
                a[:, q] = sn * ap + cs * aq
                ap, aq = a[p, :].copy(), a[q, :]
                a[p, :] = cs[:, None] * ap - sn[:, None] * aq
                a[q, :] = sn[:, None] * ap + cs[:, None] * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = cs * vp - sn * vq
                v[:, q] = sn * vp + cs * vq
        else:
            raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    # sign convention: largest |entry| positive, first index on ties
    pivots = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[pivots, np.arange(n)] < 0, -1.0, 1.0)
    return w, v * signs


def sym_eigen(c: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``r`` eigenpairs of symmetric ``c`` (eigenvalues, column eigenvectors)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(c, c.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix is not symmetric within 1e-10")
    if not 1 <= r <= c.shape[0]:
        raise ValueError(f"r must lie in [1, {c.shape[0]}], got {r}")
    w, v = jacobi_eigh(0.5 * (c + c.T))
    return w[:r], v[:, :r]


def extract_features(
    pooled: np.ndarray,
    eigenpairs: tuple[np.ndarray, np.ndarray],
    mean: np.ndarray | None,
    *,
    index: Sequence[tuple[int, int]] | None = None,
    lags: Sequence[int] | None = None,
    sample_rate_hz: float = 500.0,
) -> FeatureSet:
    """Project pooled coefficients on the eigenvectors.

    ``mean`` is the centering vector used for the covariance (``None`` for
    the uncentered variant).
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    w, v = eigenpairs
    if v.ndim != 2 or v.shape[0] != pooled.shape[0] or v.shape[1] != len(w):
        raise ValueError(f"eigenvectors {v.shape} do not match pooled matrix {pooled.shape}")
    centered = mean is not None
    mu = np.zeros(pooled.shape[0]) if mean is None else np.asarray(mean, dtype=np.float64)
    if mu.shape != (pooled.shape[0],):
        raise ValueError("mean vector has the wrong length")
    curves = v.T @ (pooled - mu[:, None])
    if index is None:
        index = [(i, 0) for i in range(pooled.shape[0])]
    if lags is None:
        lags = np.arange(pooled.shape[1])
    return FeatureSet(
        eigenvalues=np.asarray(w, dtype=np.float64),
        eigenvectors=np.asarray(v, dtype=np.float64),
        curves=curves,
        index=tuple(tuple(int(x) for x in jk) for jk in index),
        mean=mu,
        lags=np.asarray(lags),
        sample_rate_hz=sample_rate_hz,
        centered=centered,
    )


def contribution_grid(
    v: np.ndarray,
    index: Sequence[tuple[int, int]],
    spec: BasisSpec = BasisSpec(),
    resolution: int = 101,
) -> DensityGrid:
    """Sample ``f_v(y, z) = sum v_jk f_j(y) f_k(z)`` on a square grid over [0, 1]^2."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    weights = np.zeros((spec.m + 1, spec.m + 1))
    for coef, (j, k) in zip(np.asarray(v, dtype=np.float64), index):
        weights[j, k] = coef
    f = legendre_rows(np.linspace(0.0, 1.0, resolution), spec.m)
    return DensityGrid(f.T @ weights @ f)


def analyze_tensor(
    tensor: CoeffTensor,
    r: int = 3,
    mode: str = "interior",
    center: bool = True,
    marginal_removal: bool = True,
) -> FeatureSet:
    """Pool, diagonalize and project in one call."""
    pooled, index = pool_coefficients(tensor, mode, marginal_removal)
    cov = covariance_over_lags(pooled, center)
    pairs = sym_eigen(cov, r)
    mean = pooled.mean(axis=1) if center else None
    return extract_features(
        pooled, pairs, mean, index=index, lags=tensor.lags, sample_rate_hz=tensor.sample_rate_hz
    )
