"""Decentralized gradient descent and truncated-series Newton methods.

The package simulates n agents minimizing a shared objective that only
their private functions define, coupled through a doubly stochastic mixing
matrix. Solvers operate on the penalized surrogate
F(y) = 0.5 y'(I - Z)y + alpha sum_i f_i(x_i); analysis utilities verify the
spectral bounds behind the truncated-series Newton approximation, and the
runtime reproduces the reference experiments with exact communication
accounting.
"""

from .topology import (
    NetworkTopology,
    WeightMatrix,
    build_d_regular_cycle,
    build_lazy_metropolis_weights,
    build_metropolis_weights,
    matrix_to_csv,
    topology_to_csv,
    validate_weights,
)
from .objectives import (
    LocalObjective,
    LogisticInstance,
    LogisticObjective,
    QuadraticInstance,
    QuadraticObjective,
    build_objectives,
    centralized_optimum,
    curvature_metadata,
    instance_from_spec_text,
    logistic_optimum_oracle,
    make_logistic,
    make_quadratic,
    quadratic_optimum,
)
from .penalty import (
    PenalizedProblem,
    SplittingBlocks,
    dense_nn_direction,
    exact_newton_direction_oracle,
    gradient_blocks,
    local_gradient,
    nn_direction,
    penalized_optimum_oracle,
    penalized_value,
    splitting_blocks,
)
from .analysis import (
    BoundCheck,
    RateConstants,
    SpectralReport,
    constants,
    full_report,
    relative_error,
    theoretical_stepsize,
)
from .runtime import (
    AdaptiveConfig,
    HistogramConfig,
    HistogramResult,
    NodeState,
    RunTrace,
    SolverConfig,
    SyncNetwork,
    histogram_experiment,
    run,
    run_adaptive,
    step_dgd,
    step_nn,
)
from .cli import ExperimentSpec, main, spec_from_config_text

__version__ = "0.1.0"
