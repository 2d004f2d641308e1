"""Independent cross-check solver for the dual problem.

Minimizes the dual cost over Hermitian matrices confined to the range of the
moment map, by projected gradient descent with Armijo backtracking.  Plain
gradient descent is deliberate: this solver exists to confirm the fixed-point
solver's answer through a second route, so robustness beats speed, and it
avoids the ill-conditioning that Newton-type methods hit near the boundary.

Dual iterates are not confined to unit trace (the dual problem carries no
trace constraint); the two solvers are compared through the observable
spectrum G* L G only, since their minimizers may differ by an element of the
range complement and a trace normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BoundaryProximity, LineSearchStalled, MaxIterationsExceeded
from .filterbank import quadratic_form
from .hermitian import as_hermitian, trace_inner
from .problem import NormalizedProblem, gamma_apply, range_gamma_perp_basis
from .solver import EPS_DEN, cost_J

ARMIJO_CONSTANT = 1e-4
MIN_STEP = 1e-14
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50000


@dataclass(frozen=True)
class DualIterate:
    """Final dual iterate: matrix, cost, projected-gradient norm.

    ``j_trajectory`` records the cost at every accepted step (non-increasing
    by the Armijo rule); ``iterations`` counts accepted steps.
    """

    lam: np.ndarray
    j_value: float
    grad_norm: float
    iterations: int
    j_trajectory: tuple[float, ...]


def project_range_gamma(x, basis) -> np.ndarray:
    """Project a Hermitian matrix onto the range of the moment map.

    The complement basis is trace-orthonormal, so projection just strips the
    complement components.
    """
    out = as_hermitian(x).copy()
    for e in basis:
        out -= trace_inner(out, e) * e
    return (out + out.conj().T) / 2.0


def dual_gradient(prob: NormalizedProblem, lam, *, basis=None) -> np.ndarray:
    """Gradient of the dual cost at ``lam``, projected onto the moment range.

    The unprojected gradient of tr(L) - integral of psi log(G* L G) is
    I - gamma_apply(psi / (G* L G)).
    """
    mat = as_hermitian(lam)
    if basis is None:
        basis = range_gamma_perp_basis(prob.response)
    q = quadratic_form(prob.response, mat)
    if q.min() <= EPS_DEN * q.max():
        raise BoundaryProximity(
            f"denominator floor {q.min():.3e} is numerically zero"
        )
    grad = np.eye(prob.n) - gamma_apply(prob.response, prob.prior.psi / q)
    return project_range_gamma(grad, basis)


def dual_solve(prob: NormalizedProblem, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> DualIterate:
    """Projected gradient descent with backtracking on the dual cost.

    Starts from the projection of the identity onto the moment range
    (rescaled only if that point failed to have a positive spectrum floor,
    which cannot happen for a positive definite start).  The step is halved
    while the trial point leaves the positive-spectrum set or misses the
    Armijo decrease; each accepted point is re-projected to absorb
    finite-precision drift off the range.
    """
    basis = range_gamma_perp_basis(prob.response)
    lam = project_range_gamma(np.eye(prob.n), basis)
    q = quadratic_form(prob.response, lam)
    if q.min() <= 0.0:
        raise BoundaryProximity("projected identity start has no positive spectrum floor")
    j = cost_J(prob, lam)
    j_path = [j]
    step = 1.0

    for it in range(max_iter):
        grad = dual_gradient(prob, lam, basis=basis)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            lam = as_hermitian(lam)
            return DualIterate(lam=lam, j_value=j, grad_norm=gnorm,
                               iterations=it, j_trajectory=tuple(j_path))
        alpha = min(2.0 * step, 1e3)
        while True:
            trial = project_range_gamma(lam - alpha * grad, basis)
            qt = quadratic_form(prob.response, trial)
            if qt.min() > 0.0:
                jt = cost_J(prob, trial)
                if jt <= j - ARMIJO_CONSTANT * alpha * gnorm ** 2:
                    break
            alpha /= 2.0
            if alpha < MIN_STEP:
                raise LineSearchStalled(
                    f"backtracking step fell below {MIN_STEP:.0e} at iteration {it}"
                )
        lam, j, step = trial, jt, alpha
        j_path.append(j)

    raise MaxIterationsExceeded(
        f"projected gradient did not reach grad_norm <= {tol:.1e} "
        f"within {max_iter} iterations"
    )
