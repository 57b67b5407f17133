"""Regression and principal component analysis for time-indexed
probability distributions under the quadratic Wasserstein metric.

The library provides exact and entropic multimarginal transport solvers,
a reduction of measure-valued least squares to those solvers, a Gaussian
specialization via one joint covariance program, and a coordinate-descent
PCA over line segments.  The ``wregress`` command-line tool wraps the
pipelines; see README for file formats.
"""

from .errors import (
    DegenerateTimestampsError,
    DimensionError,
    EmptyMeasureError,
    InfeasibleError,
    InvalidCovarianceError,
    NumericalError,
    RangeError,
    SizeCapError,
    StepSizeError,
    WregressError,
)
from .gaussian import (
    GaussianCurve,
    GaussianDataset,
    JointCovariance,
    SDPProblem,
    SDPResult,
    build_sdp,
    fit_geodesic_1d,
    fit_means,
    gaussian_curve,
    solve_sdp,
    synthetic_variance_dataset,
)
from .measures import (
    Coupling,
    DiscreteMeasure,
    EndpointLaw,
    GaussianMeasure,
    gaussian_cross_term,
    gaussian_geodesic,
    pushforward_line,
    w2_discrete,
    w2_gaussian,
)
from .mmot import (
    DEFAULT_SIZE_CAP,
    EntropicResult,
    MarginalSpec,
    MultimarginalPlan,
    mm_marginal,
    solve_mm_entropic,
    solve_mm_exact,
)
from .regression import (
    RegressionResult,
    SampledPaths,
    TimedDataset,
    ac_bound_check,
    displacement_interpolate,
    fit_regression,
    nonconvexity_example,
    nonconvexity_probe,
    regression_objective,
    residual_cost,
    sample_paths,
)
from .wpca import PCAState, fit_pca, pca_objective, update_times

__version__ = "0.1.0"

__all__ = [
    "WregressError",
    "DimensionError",
    "EmptyMeasureError",
    "InvalidCovarianceError",
    "RangeError",
    "InfeasibleError",
    "SizeCapError",
    "NumericalError",
    "DegenerateTimestampsError",
    "StepSizeError",
    "DiscreteMeasure",
    "GaussianMeasure",
    "Coupling",
    "EndpointLaw",
    "w2_discrete",
    "w2_gaussian",
    "gaussian_cross_term",
    "gaussian_geodesic",
    "pushforward_line",
    "MarginalSpec",
    "MultimarginalPlan",
    "EntropicResult",
    "solve_mm_exact",
    "solve_mm_entropic",
    "mm_marginal",
    "DEFAULT_SIZE_CAP",
    "TimedDataset",
    "RegressionResult",
    "SampledPaths",
    "residual_cost",
    "fit_regression",
    "regression_objective",
    "displacement_interpolate",
    "nonconvexity_probe",
    "nonconvexity_example",
    "sample_paths",
    "ac_bound_check",
    "GaussianDataset",
    "JointCovariance",
    "SDPProblem",
    "SDPResult",
    "GaussianCurve",
    "fit_means",
    "build_sdp",
    "solve_sdp",
    "gaussian_curve",
    "fit_geodesic_1d",
    "synthetic_variance_dataset",
    "PCAState",
    "update_times",
    "fit_pca",
    "pca_objective",
]
