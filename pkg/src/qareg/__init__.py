"""Kernel regression for Hilbert-space covariates under quasi-associated dependence."""

from .asymptotics import (
    RateParams,
    SmallBallFunction,
    check_rate_conditions,
    compute_cj,
    sigma_plugin,
    standardized_statistic,
)
from .dependence import DependenceCoefficients, lambda_tail, qa_inequality_check
from .errors import (
    ConvergenceError,
    DegenerateVariance,
    DimensionMismatch,
    ExperimentError,
    NoNeighbors,
    QARegError,
    SelectionError,
    UsageError,
)
from .estimator import (
    EstimatorConfig,
    KernelSpec,
    cross_validate_bandwidth,
    kernel_weight,
    numerator_denominator,
    regression_estimate,
    small_ball_empirical,
)
from .hilbert_core import FunctionalSample, HilbertVector, TransformSpec, distance, inner_product, norm
from .montecarlo import (
    BandwidthRule,
    ExperimentConfig,
    ks_normal_distance,
    run_clt_experiment,
    run_variance_experiment,
)
from .process_sim import LinearProcessModel, RegressionModel, simulate, theoretical_lambda

__version__ = "0.1.0"

__all__ = [
    "BandwidthRule",
    "ConvergenceError",
    "DegenerateVariance",
    "DependenceCoefficients",
    "DimensionMismatch",
    "EstimatorConfig",
    "ExperimentConfig",
    "ExperimentError",
    "FunctionalSample",
    "HilbertVector",
    "KernelSpec",
    "LinearProcessModel",
    "NoNeighbors",
    "QARegError",
    "RateParams",
    "RegressionModel",
    "SelectionError",
    "SmallBallFunction",
    "TransformSpec",
    "UsageError",
    "check_rate_conditions",
    "compute_cj",
    "cross_validate_bandwidth",
    "distance",
    "inner_product",
    "kernel_weight",
    "ks_normal_distance",
    "lambda_tail",
    "norm",
    "numerator_denominator",
    "qa_inequality_check",
    "regression_estimate",
    "run_clt_experiment",
    "run_variance_experiment",
    "sigma_plugin",
    "simulate",
    "small_ball_empirical",
    "standardized_statistic",
    "theoretical_lambda",
]
