"""The fixed-point solver: map, dual cost, diagnostics, and classification.

The iteration acts on Hermitian PSD unit-trace matrices.  One step maps

    L  ->  L^{1/2} * [ (1/N) sum_k G_k (psi_k / (G_k* L G_k)) G_k* ] * L^{1/2}

which preserves unit trace and positivity exactly on the shared grid, keeps
the rank and kernel of L, and never increases the dual cost

    J(L) = tr(L) - (1/N) sum_k psi_k log(G_k* L G_k).

J is non-increasing along trajectories up to quadrature slack; a violation
beyond the slack aborts the run because it falsifies the implementation.
The solver stops on the Frobenius fixed-point residual rather than on the
decrement of J, which can underflow long before the iterate settles inside a
flat of non-isolated fixed points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    BoundaryProximity,
    Cond1Violated,
    LogOfNonpositive,
    LogSingularDirection,
    MonotonicityViolation,
    UnsupportedDimension,
)
from .filterbank import integrate_scalar, quadratic_form
from .hermitian import StateMatrix, as_hermitian, identity_state, principal_sqrt, state_matrix
from .problem import NormalizedProblem, gamma_apply

# Relative denominator guard: generic quadrature nodes almost never coincide
# with zeros of G* L G; when they do, the step refuses rather than amplifying
# roundoff, because the integrand's singularity is removable only in exact
# arithmetic.
EPS_DEN = 1e-13

# Per-step slack separating quadrature error from a genuine monotonicity
# violation of the dual cost.
J_STEP_SLACK = 1e-9

# Classification thresholds (defaults chosen so the two-state reference
# instance classifies stably under grid doubling).
RANK_EIG_TOL = 1e-10
PD_EIG_TOL = 1e-8
COND2_BUDGET_FACTOR = 100.0

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 10000


class Termination(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    BOUNDARY_PROXIMITY = "BoundaryProximity"


class FixedPointVariant(enum.Enum):
    POSITIVE_DEFINITE = "PositiveDefinite"
    SINGULAR_SOLVING = "SingularSolving"
    SINGULAR_NON_SOLVING = "SingularNonSolving"
    NOT_FIXED_POINT = "NotFixedPoint"


@dataclass(frozen=True)
class FixedPointClass:
    """Classification of a candidate fixed point.

    ``cond1_margin`` is the minimum of G* L G over the grid; ``cond2_residual``
    is the Frobenius distance of the reconstructed moments from the identity
    (infinite when the reconstruction denominator is numerically singular).
    """

    variant: FixedPointVariant
    cond1_margin: float
    cond2_residual: float


@dataclass(frozen=True)
class IterationState:
    """Solver loop state: current iterate and its cached diagnostics."""

    lam: StateMatrix
    k: int
    j_value: float
    denominator_floor: float


@dataclass(frozen=True)
class TrajectoryRow:
    k: int
    j_value: float
    delta_j: float
    fp_residual: float
    min_eig: float
    trace_err: float


@dataclass(frozen=True)
class SolveReport:
    trajectory: tuple[TrajectoryRow, ...]
    final_lambda: StateMatrix
    classification: FixedPointClass | None
    phi_hat: np.ndarray | None
    moment_residual: float | None
    iterations_used: int
    termination: Termination


@dataclass(frozen=True)
class InstabilityProbe:
    """Cost drop and escape behavior under an interior perturbation.

    Both cost values are computed with the same node mask (nodes where the
    projection's quadratic form is numerically zero are excluded from the
    quadrature), so the integrable-log bias of the excluded nodes cancels in
    the difference; ``excluded_nodes`` documents that bias.
    """

    j_at_projection: float
    j_at_perturbed: float
    escaped: bool
    excluded_nodes: int


def _as_state(lam) -> StateMatrix:
    return lam if isinstance(lam, StateMatrix) else state_matrix(lam)


def theta_step(prob: NormalizedProblem, lam) -> StateMatrix:
    """One application of the fixed-point map.

    Raises :class:`BoundaryProximity` when the grid quadratic form G* L G
    dips below ``EPS_DEN`` times its maximum, i.e. when the iterate is
    numerically on the boundary set where the form has a spectral zero.
    """
    lam = _as_state(lam)
    nxt, _ = _theta_core(prob, lam)
    return nxt


def _theta_core(prob: NormalizedProblem, lam: StateMatrix):
    q = quadratic_form(prob.response, lam.matrix)
    qmax = float(q.max())
    qmin = float(q.min())
    if qmin <= EPS_DEN * qmax:
        raise BoundaryProximity(
            f"denominator floor {qmin:.3e} within {EPS_DEN:.0e} of peak {qmax:.3e}"
        )
    mixed = gamma_apply(prob.response, prob.prior.psi / q)
    root = principal_sqrt(lam)
    return state_matrix(root @ mixed @ root), qmin


def theta_rank_one(prob: NormalizedProblem, x) -> StateMatrix:
    """Fixed-point map on a rank-one projection, by algebraic cancellation.

    For L = x x* the numerator and denominator |x* G|^2 cancel pointwise, so
    the map returns x x* exactly; no quadrature and no eigendecomposition is
    involved, and removable singularities are never evaluated as 0/0.
    Reachability guarantees x* G does not vanish identically, so x x* is a
    genuine fixed point for every unit x.
    """
    v = np.asarray(x, dtype=np.complex128)
    if v.shape != (prob.n,):
        raise UnsupportedDimension(f"expected a length-{prob.n} vector, got {v.shape}")
    v = v / np.linalg.norm(v)
    p = np.outer(v, v.conj())
    t = float(np.trace(p).real)
    if abs(t - 1.0) > 1e-12:
        p = p / t
        t = float(np.trace(p).real)
    p.flags.writeable = False
    return StateMatrix(matrix=p, min_eig=0.0 if prob.n > 1 else 1.0, trace=t)


def cost_J(prob: NormalizedProblem, lam) -> float:
    """Dual cost tr(L) - quadrature of psi log(G* L G).

    Accepts a :class:`StateMatrix` or any Hermitian array (the dual solver
    and finite-difference checks evaluate J off the unit-trace manifold).
    Raises :class:`LogOfNonpositive` if the quadratic form is not strictly
    positive at every node.
    """
    mat = lam.matrix if isinstance(lam, StateMatrix) else as_hermitian(lam)
    q = quadratic_form(prob.response, mat)
    if q.min() <= 0.0:
        raise LogOfNonpositive(
            f"quadratic form reaches {q.min():.3e} at a grid node"
        )
    return float(np.trace(mat).real) - integrate_scalar(
        prob.grid, prob.prior.psi * np.log(q)
    )


def _masked_cost(prob: NormalizedProblem, mat: np.ndarray, mask: np.ndarray) -> float:
    # Limit-value cost: excluded nodes carry an integrable log singularity and
    # contribute zero; weights stay 1/N so the value is the plain quadrature
    # with those nodes dropped.
    q = quadratic_form(prob.response, mat)
    logs = prob.prior.psi[mask] * np.log(q[mask])
    return float(np.trace(mat).real) - float(np.sum(logs) / prob.grid.size)


def delta_J(prob: NormalizedProblem, lam) -> float:
    """Cost decrement J(theta_step(L)) - J(L); at most quadrature slack."""
    lam = _as_state(lam)
    return cost_J(prob, theta_step(prob, lam)) - cost_J(prob, lam)


def directional_derivative(prob: NormalizedProblem, lam, direction) -> float:
    """Right-sided derivative of the dual cost at L along a Hermitian direction.

    Implements tr(D) - quadrature of psi (G* D G)/(G* L G); the direction is
    not required to be traceless.  Raises :class:`LogSingularDirection` when
    the denominator is numerically zero at some node, the regime where the
    one-sided derivative diverges to -infinity.
    """
    mat = lam.matrix if isinstance(lam, StateMatrix) else as_hermitian(lam)
    d = as_hermitian(direction)
    q = quadratic_form(prob.response, mat)
    if q.min() <= EPS_DEN * q.max():
        raise LogSingularDirection(
            f"denominator floor {q.min():.3e} is numerically zero"
        )
    dq = quadratic_form(prob.response, d)
    return float(np.trace(d).real) - integrate_scalar(
        prob.grid, prob.prior.psi * dq / q
    )


def solve(prob: NormalizedProblem, lam0=None, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Iterate the fixed-point map until the Frobenius residual drops to tol.

    Records the full trajectory (cost, decrement, residual, minimum
    eigenvalue, trace error per step).  Non-convergence outcomes
    (MaxIterations, BoundaryProximity) are reported, not raised; a cost
    increase beyond the per-step slack raises
    :class:`MonotonicityViolation`.  On convergence the final iterate is
    classified, and when its quadratic form has a positive floor the optimal
    spectrum and its moment residual are attached.
    """
    lam = identity_state(prob.n) if lam0 is None else _as_state(lam0)
    rows: list[TrajectoryRow] = []
    termination = Termination.MAX_ITERATIONS
    iterations_used = 0
    j_lam = cost_J(prob, lam)

    for k in range(max_iter):
        try:
            nxt, floor = _theta_core(prob, lam)
            j_nxt = cost_J(prob, nxt)
        except (BoundaryProximity, LogOfNonpositive):
            termination = Termination.BOUNDARY_PROXIMITY
            iterations_used = k
            break
        state = IterationState(lam=lam, k=k, j_value=j_lam, denominator_floor=floor)
        resid = float(np.linalg.norm(nxt.matrix - lam.matrix))
        dj = j_nxt - state.j_value
        rows.append(TrajectoryRow(
            k=k, j_value=state.j_value, delta_j=dj, fp_residual=resid,
            min_eig=lam.min_eig, trace_err=abs(lam.trace - 1.0),
        ))
        if dj > J_STEP_SLACK:
            raise MonotonicityViolation(
                f"cost increased by {dj:.3e} at step {k}, beyond the "
                f"{J_STEP_SLACK:.0e} quadrature slack"
            )
        lam, j_lam = nxt, j_nxt
        iterations_used = k
        if resid <= tol:
            termination = Termination.CONVERGED
            break

    classification = None
    phi = None
    resid_moment = None
    if termination is not Termination.BOUNDARY_PROXIMITY:
        classification = classify_fixed_point(prob, lam, tol)
        q = quadratic_form(prob.response, lam.matrix)
        if (termination is Termination.CONVERGED
                and classification.cond1_margin > EPS_DEN * float(q.max())):
            phi = reconstruct_phi(prob, lam)
            resid_moment = moment_residual(prob, phi)

    return SolveReport(
        trajectory=tuple(rows),
        final_lambda=lam,
        classification=classification,
        phi_hat=phi,
        moment_residual=resid_moment,
        iterations_used=iterations_used,
        termination=termination,
    )


def reconstruct_phi(prob: NormalizedProblem, lam_hat) -> np.ndarray:
    """Optimal spectrum psi / (G* L G) sampled on the grid.

    Requires a strictly positive denominator; raises :class:`Cond1Violated`
    otherwise.
    """
    mat = lam_hat.matrix if isinstance(lam_hat, StateMatrix) else as_hermitian(lam_hat)
    q = quadratic_form(prob.response, mat)
    if q.min() <= EPS_DEN * q.max():
        raise Cond1Violated(
            f"denominator floor {q.min():.3e} is numerically zero"
        )
    phi = prob.prior.psi / q
    phi.flags.writeable = False
    return phi


def moment_residual(prob: NormalizedProblem, phi) -> float:
    """Frobenius distance of the moments of phi from the identity target."""
    return float(np.linalg.norm(
        gamma_apply(prob.response, phi) - np.eye(prob.n)
    ))


def classify_fixed_point(prob: NormalizedProblem, lam, tol: float = DEFAULT_TOL, *,
                         rank_tol: float = RANK_EIG_TOL,
                         pd_tol: float = PD_EIG_TOL,
                         cond2_budget: float | None = None) -> FixedPointClass:
    """Decide whether L is a fixed point and whether it yields the optimum.

    Rank-one candidates are compared against the exact algebraic map to avoid
    a spurious boundary refusal.  A rank >= 2 candidate whose quadratic form
    is numerically zero at a node cannot be verified as fixed by quadrature
    and is reported as NotFixedPoint with an infinite cond2 residual.
    """
    lam = _as_state(lam)
    budget = COND2_BUDGET_FACTOR * tol if cond2_budget is None else cond2_budget
    w, v = np.linalg.eigh(lam.matrix)
    rank = int(np.count_nonzero(w > rank_tol))
    q = quadratic_form(prob.response, lam.matrix)
    qmax = float(q.max())
    cond1_margin = float(q.min())
    denominator_ok = cond1_margin > EPS_DEN * qmax

    if rank == 1:
        image = theta_rank_one(prob, v[:, -1]).matrix
    elif denominator_ok:
        image = theta_step(prob, lam).matrix
    else:
        return FixedPointClass(
            variant=FixedPointVariant.NOT_FIXED_POINT,
            cond1_margin=cond1_margin,
            cond2_residual=float("inf"),
        )

    fp_residual = float(np.linalg.norm(image - lam.matrix))
    if denominator_ok:
        cond2 = moment_residual(prob, prob.prior.psi / q)
    else:
        cond2 = float("inf")

    if fp_residual > tol:
        variant = FixedPointVariant.NOT_FIXED_POINT
    elif lam.min_eig > pd_tol:
        variant = FixedPointVariant.POSITIVE_DEFINITE
    elif denominator_ok and cond2 <= budget:
        variant = FixedPointVariant.SINGULAR_SOLVING
    else:
        variant = FixedPointVariant.SINGULAR_NON_SOLVING
    return FixedPointClass(variant=variant, cond1_margin=cond1_margin,
                           cond2_residual=cond2)


def construct_N0_member(prob: NormalizedProblem, theta_bar: float) -> np.ndarray:
    """Unit vector orthogonal to the filter response at a grid node.

    Only defined for n = 2, where the orthogonal complement of G(theta_bar)
    is a single complex line, so the projection onto it is automatically a
    boundary fixed point of the map.  ``theta_bar`` must be a grid node.
    """
    if prob.n != 2:
        raise UnsupportedDimension(
            f"boundary member construction is defined for n=2 only, got n={prob.n}"
        )
    nodes = prob.grid.nodes
    k = int(np.argmin(np.abs(nodes - theta_bar)))
    if abs(nodes[k] - theta_bar) > 1e-12:
        raise ValueError(
            f"theta_bar={theta_bar!r} is not a grid node (nearest: {nodes[k]!r})"
        )
    g = prob.response.samples[k]
    x = np.array([-np.conj(g[1]), np.conj(g[0])])
    x /= np.linalg.norm(x)
    x.flags.writeable = False
    return x


def instability_probe(prob: NormalizedProblem, x_bar, eps: float, *,
                      max_iter: int = DEFAULT_MAX_ITER) -> InstabilityProbe:
    """Probe the boundary projection x x* for loss of asymptotic stability.

    Evaluates the limit-value cost at P = x x* and the cost at the interior
    blend (1 - eps) P + eps I/n, both over the same node mask, and iterates
    the map from the blend to see whether the trajectory leaves the
    eps-neighborhood of P.  eps = 0 degenerates to two equal cost values.
    """
    if not 0.0 <= eps <= 0.1:
        raise ValueError(f"eps must lie in [0, 0.1], got {eps!r}")
    v = np.asarray(x_bar, dtype=np.complex128)
    v = v / np.linalg.norm(v)
    p = np.outer(v, v.conj())

    qbar = quadratic_form(prob.response, p)
    mask = qbar > EPS_DEN * float(qbar.max())
    excluded = int(prob.grid.size - np.count_nonzero(mask))
    j_at_p = _masked_cost(prob, p, mask)
    if eps == 0.0:
        return InstabilityProbe(j_at_projection=j_at_p, j_at_perturbed=j_at_p,
                                escaped=False, excluded_nodes=excluded)

    blend = (1.0 - eps) * p + (eps / prob.n) * np.eye(prob.n)
    j_perturbed = _masked_cost(prob, blend, mask)

    escaped = False
    lam = state_matrix(blend)
    for _ in range(max_iter):
        if float(np.linalg.norm(lam.matrix - p)) > eps:
            escaped = True
            break
        lam = theta_step(prob, lam)
    return InstabilityProbe(j_at_projection=j_at_p, j_at_perturbed=j_perturbed,
                            escaped=escaped, excluded_nodes=excluded)
