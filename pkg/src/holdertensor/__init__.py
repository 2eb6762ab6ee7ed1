"""Tensor methods for driving the gradient norm of convex functions below a target."""

from .metric import MetricSpace, derivative_action_check, dual_norm, gradient_check, primal_norm
from .oracle import (
    CompositePart,
    HolderEstimate,
    PowerNorm,
    SmoothOracle,
    composite_gradient_mapping,
    composite_value,
    estimate_holder,
)
from .models import (
    Certificate,
    ModelSpec,
    RegularizedModel,
    check_certificate,
    convexity_threshold,
    model_gradient,
    model_hessian,
    model_value,
    rounding_floor,
    taylor_gradient,
    taylor_value,
)
from .subsolver import (
    PsiState,
    SubsolverConfig,
    SubsolverError,
    solve_at_coefficient,
    solve_model,
    solve_model_generic,
    solve_model_order2,
    solve_psi,
)
from .schemes import (
    C_p_nu,
    RunTrace,
    SchemeConfig,
    SchemeError,
    evaluate_N,
    evaluate_Ntilde,
    make_regularized,
    run_accelerated,
    run_alg1,
    run_alg2,
    run_alg3,
    run_alg4,
    run_alg6_restart,
)
from .instances import (
    HardInstance,
    gradient_lower_bound_check,
    hard_derivative_action,
    hard_value_grad,
    subspace_growth_report,
    zoo,
)

from .bench import (
    BOUND_TAGS,
    BoundReport,
    ConfigError,
    ExperimentConfig,
    build_instance,
    load_run,
    lower_bound_evaluate,
    parse_instance_spec,
    read_trace_csv,
    replay_bounds,
    run_batch,
    run_experiment,
    slope_estimate,
    write_summary,
    write_trace_csv,
)

__version__ = "0.1.0"
