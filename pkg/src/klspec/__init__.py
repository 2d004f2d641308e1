"""Kullback-Leibler optimal spectral approximation under covariance constraints.

Given a bank of rational filters, a target steady-state covariance, and a
prior spectral density, the package finds the density that matches the
covariance exactly while staying as close as possible to the prior, using a
trace-preserving fixed-point iteration on positive semidefinite matrices,
plus a projected-gradient dual solver as an independent cross-check.
"""

from .dual import DualIterate, dual_gradient, dual_solve
from .exceptions import KLSpecError
from .filterbank import (
    CircleGrid,
    FilterBank,
    GridResponse,
    circle_grid,
    eval_G,
    grid_response,
    integrate_matrix,
    integrate_scalar,
    quadratic_form,
    validate_filterbank,
)
from .hermitian import (
    StateMatrix,
    as_hermitian,
    hermitian_basis,
    identity_state,
    min_eigenvalue,
    principal_sqrt,
    state_matrix,
    trace_inner,
)
from .problem import (
    FeasibilityReport,
    NormalizedProblem,
    PriorSpectrum,
    RawProblem,
    check_feasibility,
    constant_prior,
    gamma_apply,
    kl_divergence,
    normalize,
    range_gamma_perp_basis,
    rational_prior,
    raw_problem,
    samples_prior,
)
from .solver import (
    FixedPointClass,
    FixedPointVariant,
    InstabilityProbe,
    SolveReport,
    Termination,
    classify_fixed_point,
    construct_N0_member,
    cost_J,
    delta_J,
    directional_derivative,
    instability_probe,
    moment_residual,
    reconstruct_phi,
    solve,
    theta_rank_one,
    theta_step,
)

__version__ = "0.1.0"

__all__ = [
    "CircleGrid",
    "DualIterate",
    "FeasibilityReport",
    "FilterBank",
    "FixedPointClass",
    "FixedPointVariant",
    "GridResponse",
    "InstabilityProbe",
    "KLSpecError",
    "NormalizedProblem",
    "PriorSpectrum",
    "RawProblem",
    "SolveReport",
    "StateMatrix",
    "Termination",
    "as_hermitian",
    "check_feasibility",
    "circle_grid",
    "classify_fixed_point",
    "constant_prior",
    "construct_N0_member",
    "cost_J",
    "delta_J",
    "directional_derivative",
    "dual_gradient",
    "dual_solve",
    "eval_G",
    "gamma_apply",
    "grid_response",
    "hermitian_basis",
    "identity_state",
    "instability_probe",
    "integrate_matrix",
    "integrate_scalar",
    "kl_divergence",
    "min_eigenvalue",
    "moment_residual",
    "normalize",
    "principal_sqrt",
    "quadratic_form",
    "range_gamma_perp_basis",
    "rational_prior",
    "raw_problem",
    "reconstruct_phi",
    "samples_prior",
    "solve",
    "state_matrix",
    "theta_rank_one",
    "theta_step",
    "trace_inner",
    "validate_filterbank",
]
