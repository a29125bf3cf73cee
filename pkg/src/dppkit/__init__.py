"""Exact sampling from determinantal point processes.

L-ensembles and their spectra, four projective k-DPP samplers sharing one
random-stream discipline, brute-force enumeration oracles for small ground
sets, and k-means coreset estimators built on DPP samples.
"""

__version__ = "0.1.0"

from ._backend import get_backend, set_backend, use_backend
from .coreset import (
    CentersHypothesis,
    CoresetKernel,
    CoresetQuality,
    Dataset,
    DegenerateVarianceWarning,
    SensitivityVector,
    WeightedSample,
    coreset_alpha,
    coreset_kernel,
    coreset_quality,
    default_theta_grid,
    estimate_cost,
    estimate_size,
    gaussian_similarity,
    kmeans_cost,
    lloyd,
    point_costs,
    sensitivity_1means,
    sensitivity_grid_lower_bound,
)
from .errors import (
    AllZero,
    DegenerateKernel,
    DegenerateRank,
    DegenerateVariance,
    DPPError,
    IndexOutOfRange,
    NotPSD,
    NotSymmetric,
    NumericalBreakdown,
    RankMismatch,
    TooLarge,
    UnsupportedSubset,
    ValidationError,
    ZeroCost,
    ZeroMarginal,
)
from .oracle import (
    FitReport,
    PairedTrace,
    SubsetDistribution,
    cardinality_pmf,
    enumerate_dpp,
    enumerate_projective_kdpp,
    goodness_of_fit,
    paired_trace,
)
from .sampling import (
    ALGORITHMS,
    DualProjective,
    ProjectiveBasis,
    SampleDraw,
    categorical_draw,
    sample_dpp,
    sample_dpp_many,
    sample_projective,
    sample_projective_dual,
    sample_projective_efficient,
    sample_projective_many,
    sample_projective_reference,
    sample_projective_schur,
    sanitize_probabilities,
)
from .spectral import (
    DualFactor,
    LEnsemble,
    Spectrum,
    SpectrumStats,
    bernoulli_phase,
    dual_factorization,
    eigendecompose_symmetric,
    lift_eigenvector,
    marginal_kernel,
    spectrum_stats,
)
