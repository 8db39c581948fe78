"""Mapping raw series into (0, 1).

Two routes are provided:

* basic normalization, ``y = Phi((x - mean) / sd)`` with the population
  standard deviation of the whole series;
* predictive ("p-") normalization, where each value is pushed through a CDF
  predicted from the series' own past: AR(p) mean, ARCH(1) variance and an
  adaptive Student-t whose scale follows an exponential moving average.
  The result is close to i.i.d. uniform, so whatever dependence remains
  against another series is information the series' past did not carry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import special
from scipy.signal import lfilter

from .errors import StageError

__all__ = [
    "CLAMP",
    "NormalizedSeries",
    "ARModel",
    "ARCHModel",
    "AdaptiveTModel",
    "PNormConfig",
    "PNormFit",
    "gaussian_cdf",
    "gauss_normalize",
    "fit_ar",
    "ar_residuals",
    "fit_arch",
    "arch_sd",
    "student_t_cdf",
    "student_t_logpdf",
    "adaptive_t_fit",
    "p_normalize",
]

CLAMP = 1e-15

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NormalizedSeries:
    """Values in the open unit interval plus how they were obtained.

    ``burn_in`` leading samples are kept (so indices line up with the raw
    series) but must be ignored by estimators.
    """

    values: np.ndarray
    kind: str = "basic"
    burn_in: int = 0

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1:
            raise ValueError("normalized values must be one-dimensional")
        if not np.all((v > 0.0) & (v < 1.0)):
            raise ValueError("normalized values must lie strictly inside (0, 1)")
        if self.kind not in ("basic", "predicted"):
            raise ValueError(f"unknown normalization kind {self.kind!r}")
        if not 0 <= self.burn_in < len(v):
            raise ValueError(f"burn_in {self.burn_in} out of range for length {len(v)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ARModel:
    coefficients: np.ndarray
    intercept: float = 0.0

    def __post_init__(self) -> None:
        c = np.atleast_1d(np.asarray(self.coefficients, dtype=np.float64))
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise ValueError("AR coefficients must be a nonempty finite list")
        object.__setattr__(self, "coefficients", c)

    @property
    def order(self) -> int:
        return int(self.coefficients.size)


@dataclass(frozen=True)
class ARCHModel:
    omega: float
    alpha: float
    log_likelihood: float = float("nan")

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise ValueError(f"ARCH omega must be positive, got {self.omega}")
        if not 0 <= self.alpha < 1:
            raise ValueError(f"ARCH alpha must lie in [0, 1), got {self.alpha}")


@dataclass(frozen=True)
class AdaptiveTModel:
    nu: float
    ema_rate: float
    initial_scale: float
    log_likelihood: float

    def __post_init__(self) -> None:
        if not self.nu > 2:
            raise ValueError(f"nu must exceed 2, got {self.nu}")
        if not 0 < self.ema_rate < 1:
            raise ValueError(f"ema_rate must lie in (0, 1), got {self.ema_rate}")


@dataclass(frozen=True)
class PNormConfig:
    ar_order: int = 10
    nu_grid: tuple[float, ...] = (4, 6, 8, 10, 12, 16, 20, 30)
    ema_rate_grid: tuple[float, ...] = (0.002, 0.005, 0.01, 0.02, 0.05)
    init_window: int = 100
    # Forces the ARCH stage to this alpha instead of fitting it (diagnostics).
    fixed_arch_alpha: float | None = None
    min_length: int = 1000

    def to_dict(self) -> dict:
        return {
            "ar_order": self.ar_order,
            "nu_grid": list(self.nu_grid),
            "ema_rate_grid": list(self.ema_rate_grid),
            "init_window": self.init_window,
        }


class PNormFit(NamedTuple):
    series: NormalizedSeries
    ar: ARModel
    arch: ARCHModel
    student: AdaptiveTModel


# ---------------------------------------------------------------------------
# CDFs


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} must be finite")


def gaussian_cdf(x):
    """Standard normal CDF, clamped into ``[1e-15, 1 - 1e-15]``.

    Accepts scalars or arrays; returns the same shape.
    """
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, "gaussian_cdf input")
    p = np.clip(special.ndtr(arr), CLAMP, 1.0 - CLAMP)
    return float(p) if p.ndim == 0 else p


def student_t_cdf(x, nu: float):
    """Student-t CDF with ``nu`` degrees of freedom.

    Uses the regularized incomplete beta function,
    ``P(T > |x|) = I_{nu/(nu+x^2)}(nu/2, 1/2) / 2``, evaluated on the tail
    side to keep precision far from the center.
    """
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr, "student_t_cdf input")
    tail = 0.5 * special.betainc(0.5 * nu, 0.5, nu / (nu + arr * arr))
    p = np.where(arr > 0, 1.0 - tail, tail)
    return float(p) if p.ndim == 0 else p


def student_t_logpdf(x: np.ndarray, nu: float) -> np.ndarray:
    const = special.gammaln(0.5 * (nu + 1)) - special.gammaln(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return const - 0.5 * (nu + 1) * np.log1p(x * x / nu)


# ---------------------------------------------------------------------------
# basic normalization


def gauss_normalize(series: Sequence[float]) -> NormalizedSeries:
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("gauss_normalize needs a 1-D series of length >= 2")
    _check_finite(x, "series")
    mean = x.mean()
    sd = math.sqrt(np.mean((x - mean) ** 2))
    if not sd > 0:
        raise ValueError("zero variance: cannot normalize a constant series")
    return NormalizedSeries(gaussian_cdf((x - mean) / sd), kind="basic", burn_in=0)


# ---------------------------------------------------------------------------
# AR stage


def _lag_design(x: np.ndarray, order: int) -> np.ndarray:
    n = x.size
    cols = [np.ones(n - order)]
    cols += [x[order - i : n - i] for i in range(1, order + 1)]
    return np.column_stack(cols)


def fit_ar(series: Sequence[float], order: int = 10) -> ARModel:
    """Least-squares AR(order) with intercept, using every valid time step."""
    x = np.asarray(series, dtype=np.float64)
    if order < 1:
        raise ValueError("AR order must be positive")
    if x.size <= 10 * order:
        raise ValueError(f"series of length {x.size} too short for AR order {order} (need > {10 * order})")
    _check_finite(x, "series")
    X = _lag_design(x, order)
    target = x[order:]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("singular AR design matrix (constant or degenerate series)")
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    return ARModel(coefficients=beta[1:], intercept=float(beta[0]))


def ar_residuals(model: ARModel, series: Sequence[float]) -> np.ndarray:
    """Residuals ``x[t] - prediction`` for ``t >= order`` (length ``n - order``)."""
    x = np.asarray(series, dtype=np.float64)
    p = model.order
    if x.size < p + 1:
        raise ValueError(f"series of length {x.size} too short for AR order {p}")
    pred = np.full(x.size - p, model.intercept)
    for i, c in enumerate(model.coefficients, start=1):
        pred += c * x[p - i : x.size - i]
    return x[p:] - pred


# ---------------------------------------------------------------------------
# ARCH(1) stage


def _golden_max(f: Callable[[float], float], lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section search for the maximum of a unimodal ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    # the bracket endpoints themselves may beat the interior probes
    best = max(((f(x), x) for x in (a, 0.5 * (a + b), b)), key=lambda t: t[0])
    return best[1], best[0]


def _arch_loglik(e2: np.ndarray, p2: np.ndarray, omega: float, alpha: float) -> float:
    s = omega + alpha * p2
    return -0.5 * float(np.sum(np.log(s) + e2 / s) + e2.size * math.log(2 * math.pi))


OMEGA_MIN = 1e-12
ALPHA_MAX = 0.999


def fit_arch(residuals: Sequence[float], fixed_alpha: float | None = None, tol: float = 1e-8) -> ARCHModel:
    """Gaussian quasi-maximum-likelihood ARCH(1) fit.

    Maximizes the log-likelihood of ``eps[t] ~ N(0, omega + alpha*eps[t-1]^2)``
    for ``t >= 1``.  The profile likelihood in ``alpha`` is maximized by
    golden-section search on ``[0, 0.999]``; for each ``alpha`` the best
    ``omega >= 1e-12`` is found by an inner golden-section search over
    ``log(omega)``.  ``tol`` applies to ``alpha`` and to ``log(omega)``.
    """
    eps = np.asarray(residuals, dtype=np.float64)
    if eps.size < 100:
        raise ValueError(f"ARCH fit needs at least 100 residuals, got {eps.size}")
    _check_finite(eps, "residuals")
    e2 = eps[1:] ** 2
    p2 = eps[:-1] ** 2
    scale = float(np.mean(e2))
    if not scale > 0 or np.var(eps) == 0:
        raise ValueError("degenerate residuals: zero variance")

    log_lo = math.log(OMEGA_MIN)
    log_hi = math.log(2.0 * scale)

    def profile(alpha: float) -> tuple[float, float]:
        lw, ll = _golden_max(lambda lw: _arch_loglik(e2, p2, math.exp(lw), alpha), log_lo, log_hi, tol)
        return math.exp(lw), ll

    if fixed_alpha is not None:
        alpha = float(fixed_alpha)
    else:
        alpha, _ = _golden_max(lambda a: profile(a)[1], 0.0, ALPHA_MAX, tol)
    omega, ll = profile(alpha)
    return ARCHModel(omega=omega, alpha=alpha, log_likelihood=ll)


def arch_sd(model: ARCHModel, residuals: np.ndarray) -> np.ndarray:
    """Predicted standard deviation for every residual.

    The first residual has no predecessor and gets the unconditional
    standard deviation ``sqrt(omega / (1 - alpha))``.
    """
    eps = np.asarray(residuals, dtype=np.float64)
    var = np.empty_like(eps)
    var[0] = model.omega / (1.0 - model.alpha)
    var[1:] = model.omega + model.alpha * eps[:-1] ** 2
    return np.sqrt(var)


# ---------------------------------------------------------------------------
# adaptive Student-t stage


def _ema_variance(u: np.ndarray, rate: float, s0_sq: float) -> np.ndarray:
    """``s2[0] = s0_sq``, ``s2[i] = (1 - rate) * s2[i-1] + rate * u[i-1]^2``."""
    s2 = np.empty_like(u)
    s2[0] = s0_sq
    if u.size > 1:
        zi = np.array([(1.0 - rate) * s0_sq])
        s2[1:], _ = lfilter([rate], [1.0, -(1.0 - rate)], u[:-1] ** 2, zi=zi)
    return s2


def _t_scale(s2: np.ndarray, nu: float) -> np.ndarray:
    # s2 tracks E[u^2]; a t variable with scale c has variance c^2 nu/(nu-2)
    return np.sqrt(s2 * (nu - 2.0) / nu)


def adaptive_t_fit(
    u: np.ndarray,
    nu_grid: Sequence[float],
    ema_rate_grid: Sequence[float],
    init_window: int = 100,
    extra_loglik: float = 0.0,
) -> tuple[AdaptiveTModel, np.ndarray]:
    """Pick ``(nu, ema_rate)`` by log-likelihood and return the model with its scales.

    Log-likelihood terms are summed over ``u[init_window:]``.  ``extra_loglik``
    is added to the reported value (the caller's change-of-variables terms).
    """
    u = np.asarray(u, dtype=np.float64)
    if u.size <= init_window:
        raise ValueError(f"need more than {init_window} values for the adaptive t stage")
    s0_sq = float(np.var(u[:init_window], ddof=1))
    if not s0_sq > 0:
        raise ValueError("zero variance in the initial window")
    best: tuple[float, float, float] | None = None
    for rate in ema_rate_grid:
        s2 = _ema_variance(u, float(rate), s0_sq)
        for nu in nu_grid:
            c = _t_scale(s2, float(nu))[init_window:]
            ll = float(np.sum(student_t_logpdf(u[init_window:] / c, float(nu)) - np.log(c)))
            if best is None or ll > best[0]:
                best = (ll, float(nu), float(rate))
    assert best is not None
    ll, nu, rate = best
    scale = _t_scale(_ema_variance(u, rate, s0_sq), nu)
    model = AdaptiveTModel(nu=nu, ema_rate=rate, initial_scale=math.sqrt(s0_sq), log_likelihood=ll + extra_loglik)
    return model, scale


# ---------------------------------------------------------------------------
# full pipeline


def p_normalize(series: Sequence[float], config: PNormConfig | None = None) -> PNormFit:
    """Predictive normalization: AR -> ARCH(1) -> adaptive Student-t CDF.

    Output values at index ``t`` use only information up to ``t - 1`` (apart
    from the globally fitted parameters).  The first ``ar_order`` samples
    have no prediction and are set to 0.5; ``burn_in = ar_order +
    init_window`` covers them and the EMA warm-up.

    ``AdaptiveTModel.log_likelihood`` is the total log-likelihood of the AR
    residuals ``eps[t]`` over the post-burn-in range, i.e. the Student-t
    term plus the ARCH change of variables ``-log sd[t]``.
    """
    cfg = config or PNormConfig()
    x = np.asarray(series, dtype=np.float64)
    if x.size < cfg.min_length:
        raise StageError("p_normalize", f"series length {x.size} below the minimum {cfg.min_length}")

    try:
        ar = fit_ar(x, cfg.ar_order)
        eps = ar_residuals(ar, x)
    except ValueError as exc:
        raise StageError("ar", str(exc)) from exc
    try:
        arch = fit_arch(eps, fixed_alpha=cfg.fixed_arch_alpha)
        sd = arch_sd(arch, eps)
        u = eps / sd
    except ValueError as exc:
        raise StageError("arch", str(exc)) from exc
    try:
        w = cfg.init_window
        jac = -float(np.sum(np.log(sd[w:])))
        student, scale = adaptive_t_fit(u, cfg.nu_grid, cfg.ema_rate_grid, w, extra_loglik=jac)
    except ValueError as exc:
        raise StageError("adaptive-t", str(exc)) from exc

    z = np.full(x.size, 0.5)
    z[cfg.ar_order :] = student_t_cdf(u / scale, student.nu)
    z = np.clip(z, CLAMP, 1.0 - CLAMP)
    out = NormalizedSeries(z, kind="predicted", burn_in=cfg.ar_order + cfg.init_window)
    return PNormFit(out, ar, arch, student)


def model_summary(fit: PNormFit) -> dict:
    """JSON-ready parameters of a p-normalization fit."""
    return {
        "ar": {"order": fit.ar.order, "intercept": fit.ar.intercept, "coefficients": fit.ar.coefficients.tolist()},
        "arch": {"omega": fit.arch.omega, "alpha": fit.arch.alpha, "log_likelihood": fit.arch.log_likelihood},
        "student_t": {
            "nu": fit.student.nu,
            "ema_rate": fit.student.ema_rate,
            "initial_scale": fit.student.initial_scale,
            "log_likelihood": fit.student.log_likelihood,
        },
        "burn_in": fit.series.burn_in,
    }
