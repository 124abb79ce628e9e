"""Covariance steering of discrete-time Gaussian linear systems with a squared
Wasserstein-distance terminal cost: analytic gradients and Hessian, convexity
certificates, a convex-concave solver, and Monte Carlo validation."""

from . import errors, matops
from .objective import (
    Certificate,
    ObjectiveReport,
    Policy,
    convexity_certificate,
    evaluate,
    grad_theta,
    grad_theta_j4,
    grad_uff,
    hessian_theta,
    omega,
    stationarity_residual,
    terminal_covariance,
    terminal_gaussian,
    wasserstein_sq_gaussian,
)
from .problem import (
    BlockOperators,
    CausalityMask,
    Gaussian,
    SteeringProblem,
    TimeVaryingLinearSystem,
    assemble,
    causality_mask,
    state_transition,
    validate,
)
from .simulate import RolloutReport, k_to_theta, rollout, theta_to_k
from .solver import (
    LineScanSample,
    Solution,
    SolverOptions,
    SolveTrace,
    ccp_solve,
    ccp_subproblem,
    count_strict_local_minima,
    line_scan,
    newton_refine,
    solve,
    solve_feedforward,
    solve_feedforward_woodbury,
)

__version__ = "0.1.0"

__all__ = [
    "Certificate", "ObjectiveReport", "Policy", "convexity_certificate",
    "evaluate", "grad_theta", "grad_theta_j4", "grad_uff", "hessian_theta",
    "omega", "stationarity_residual", "terminal_covariance", "terminal_gaussian",
    "wasserstein_sq_gaussian",
    "BlockOperators", "CausalityMask", "Gaussian", "SteeringProblem",
    "TimeVaryingLinearSystem", "assemble", "causality_mask", "state_transition",
    "validate",
    "RolloutReport", "k_to_theta", "rollout", "theta_to_k",
    "LineScanSample", "Solution", "SolverOptions", "SolveTrace", "ccp_solve",
    "ccp_subproblem", "count_strict_local_minima", "line_scan", "newton_refine",
    "solve", "solve_feedforward", "solve_feedforward_woodbury",
    "errors", "matops",
]
