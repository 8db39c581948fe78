"""Lag-resolved multi-feature dependency analysis of paired time series.

Joint densities of lagged pairs of normalized series are modeled in an
orthonormal Legendre product basis, the lag-dependent coefficients are
reduced by PCA to a few feature curves, and the same machinery on
predictively normalized targets gives a density-based Granger causality
score.
"""

__version__ = "0.1.0"

from .basis import BasisMatrix, BasisSpec, eval_basis_matrix, legendre
from .causality import CausalityCurve, CausalityMap, causal_lag_sweep, causality_score, pairwise_causality_map
from .features import (
    DensityGrid,
    FeatureSet,
    analyze_tensor,
    contribution_grid,
    covariance_over_lags,
    extract_features,
    pool_coefficients,
    sym_eigen,
)
from .hcr import CoeffMatrix, CoeffTensor, density_eval, estimate_coeffs, lag_sweep, remove_marginals
from .normalize import (
    NormalizedSeries,
    PNormConfig,
    fit_ar,
    fit_arch,
    gauss_normalize,
    gaussian_cdf,
    p_normalize,
    student_t_cdf,
)
from .signal_io import Recording, SynthSpec, generate_synthetic, load_csv, select_window, write_csv
