"""Minimizing-movements flows for causal variational principles on finite grids."""

from ._backend import BACKEND
from .action import ElReport, action, continuity_moduli, el_report, ell
from .cfs import (
    CfsDistance,
    CfsGrid,
    CfsState,
    MomentSet,
    SymOperator,
    action_via_moments,
    build_cfs_kernel,
    cfs_distance,
    filtration_flow,
    kappa_lagrangian,
    run_cfs_flow,
    to_moments,
)
from .flow import (
    ActionCurve,
    DiscreteFlow,
    FlowConfig,
    InnerSolverConfig,
    compare_h,
    curve_diagnostics,
    inner_minimize,
    interpolate_time,
    limit_and_certify,
    penalized_action,
    reparametrize_by_action,
    run_flow,
)
from .metrics import MetricChoice, TransportPlan, distance, total_variation, wasserstein
from .space import (
    Kernel,
    MetricSpace,
    ProbabilityMeasure,
    SignedMeasure,
    build_metric_space,
    potential_kernel,
    validate_kernel,
)
from .spiral import SpiralState, integrate_flow, spiral_action, spiral_gradient, winding_report

__version__ = "0.1.0"
