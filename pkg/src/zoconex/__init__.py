"""Stochastic zeroth-order optimization under zeroth-order functional constraints.

The package solves  min f_0(x) over a compact convex domain subject to
f_i(x) <= 0  when every function is reachable only through noisy value
queries. The convex solver combines Gaussian-smoothing two-point gradient
estimates with primal-dual constraint extrapolation; a proximal-point outer
loop extends it to nonconvex problems. A QCQP benchmark harness, a
noiseless reference solver, and a CSV experiment runner reproduce the
desk-scale convergence behavior.
"""

from .geometry import (
    Ball,
    Box,
    EuclideanGeometry,
    bregman_divergence,
    domain_diameter,
    normal_cone_distance,
    project_nonneg,
    prox_step,
)
from .problem import (
    EstimatorError,
    NoiseModel,
    OracleLedger,
    ProblemSpec,
    SmoothnessConstants,
    StochasticOracle,
    aggregate_constants,
    draw_noisy_pair,
    ledger_expected_calls,
)
from .proximal import (
    KktReport,
    MetaResult,
    ProximalConfig,
    default_regularization,
    estimate_multipliers,
    kkt_residual,
    nearby_kkt_report,
    proximal_point_solve,
    regularize_problem,
    snap_to_boundary,
    spectral_regularization,
)
from .qcqp import (
    QcqpInstance,
    ReferenceSolution,
    instance_from_text,
    instance_to_text,
    lagrangian_gap,
    metrics,
    random_instance,
    reference_solve,
    smoothed_gap_deviation,
)
from .smoothing import (
    GradientEstimate,
    SmoothingConfig,
    gradient_variance_bound,
    sample_direction,
    select_smoothing_parameters,
    smoothing_bias_bound,
    two_point_gradient,
    value_variance_bound,
)
from .solver import (
    Linearization,
    RunningAverage,
    RunTrace,
    SolverState,
    StepSchedule,
    build_linearization,
    dual_update,
    extrapolate,
    primal_update,
    schedule_from_bounds,
    solve,
    step_sizes,
)
from .streams import StreamSet

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "Box",
    "EstimatorError",
    "EuclideanGeometry",
    "GradientEstimate",
    "KktReport",
    "Linearization",
    "MetaResult",
    "NoiseModel",
    "OracleLedger",
    "ProblemSpec",
    "ProximalConfig",
    "QcqpInstance",
    "ReferenceSolution",
    "RunTrace",
    "RunningAverage",
    "SmoothingConfig",
    "SmoothnessConstants",
    "SolverState",
    "StepSchedule",
    "StochasticOracle",
    "StreamSet",
    "aggregate_constants",
    "bregman_divergence",
    "build_linearization",
    "default_regularization",
    "domain_diameter",
    "draw_noisy_pair",
    "dual_update",
    "estimate_multipliers",
    "extrapolate",
    "gradient_variance_bound",
    "instance_from_text",
    "instance_to_text",
    "kkt_residual",
    "lagrangian_gap",
    "ledger_expected_calls",
    "metrics",
    "normal_cone_distance",
    "primal_update",
    "project_nonneg",
    "prox_step",
    "nearby_kkt_report",
    "proximal_point_solve",
    "random_instance",
    "reference_solve",
    "regularize_problem",
    "sample_direction",
    "schedule_from_bounds",
    "select_smoothing_parameters",
    "smoothed_gap_deviation",
    "smoothing_bias_bound",
    "snap_to_boundary",
    "solve",
    "spectral_regularization",
    "step_sizes",
    "two_point_gradient",
    "value_variance_bound",
]
