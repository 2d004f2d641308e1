"""Problem assembly: priors, normalization, feasibility, and the moment map.

A raw problem consists of a filter bank (A, B), a positive definite target
covariance Sigma, and a strictly positive prior density sampled on the grid.
``normalize`` rescales the prior to unit mass and whitens the state space so
the covariance constraint becomes the identity; the recorded provenance makes
the transformation invertible.  The linear moment map

    gamma_apply(phi) = (1/N) sum_k G_k phi_k G_k*

and the orthogonal complement of its range are the geometric backbone of the
solvers in :mod:`klspec.solver` and :mod:`klspec.dual`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    LengthMismatch,
    NonpositivePhi,
    NonpositivePrior,
    NullspaceUnstable,
    SigmaNotPositiveDefinite,
)
from .filterbank import (
    CircleGrid,
    FilterBank,
    GridResponse,
    circle_grid,
    grid_response,
    integrate_matrix,
    integrate_scalar,
    quadratic_form,
    validate_filterbank,
)
from .hermitian import as_hermitian, hermitian_basis

# Feasibility threshold separating quadrature/roundoff noise from genuine
# infeasibility at desk scale; relative to max(1, ||Sigma - A Sigma A*||_F).
FEASIBILITY_RTOL = 1e-8

# Relative singular-value cutoff for the moment-map nullspace.
NULLSPACE_CUTOFF = 1e-9

SIGMA_MIN_EIG = 1e-10


@dataclass(frozen=True)
class PriorSpectrum:
    """Strictly positive prior density with unit quadrature mass."""

    grid: CircleGrid
    psi: np.ndarray  # (N,) positive reals, mean exactly 1 up to roundoff


def _finalize_prior(grid: CircleGrid, values: np.ndarray) -> PriorSpectrum:
    if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
        raise NonpositivePrior("prior density must be finite and strictly positive")
    psi = values / integrate_scalar(grid, values)
    psi.flags.writeable = False
    return PriorSpectrum(grid=grid, psi=psi)


def constant_prior(grid: CircleGrid) -> PriorSpectrum:
    """The flat prior, already unit mass."""
    return _finalize_prior(grid, np.ones(grid.size))


def samples_prior(grid: CircleGrid, values) -> PriorSpectrum:
    """Prior from raw grid samples; normalized to unit mass on construction."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (grid.size,):
        raise LengthMismatch(f"expected {grid.size} prior samples, got shape {v.shape}")
    return _finalize_prior(grid, v)


def rational_prior(grid: CircleGrid, num, den, *, oversample: int = 8,
                   den_floor: float = 1e-8) -> PriorSpectrum:
    """Prior of the form |num(z)|^2 / |den(z)|^2 on z = e^{i theta}.

    Coefficients are ascending powers of z.  The denominator must be
    zero-free on the unit circle, checked by requiring min |den| > den_floor
    over an ``oversample * N``-point grid.
    """
    samples = rational_density_samples(grid, num, den, oversample=oversample,
                                       den_floor=den_floor)
    return _finalize_prior(grid, samples)


def rational_density_samples(grid: CircleGrid, num, den, *, oversample: int = 8,
                             den_floor: float = 1e-8) -> np.ndarray:
    """Unnormalized samples of |num(z)|^2 / |den(z)|^2 on the grid nodes."""
    cn = np.atleast_1d(np.asarray(num, dtype=np.complex128))
    cd = np.atleast_1d(np.asarray(den, dtype=np.complex128))
    fine = np.exp(1j * (-np.pi + 2.0 * np.pi * np.arange(oversample * grid.size)
                        / (oversample * grid.size)))
    if np.min(np.abs(np.polynomial.polynomial.polyval(fine, cd))) <= den_floor:
        raise NonpositivePrior("denominator polynomial vanishes on the unit circle")
    z = np.exp(1j * grid.nodes)
    nv = np.abs(np.polynomial.polynomial.polyval(z, cn)) ** 2
    dv = np.abs(np.polynomial.polynomial.polyval(z, cd)) ** 2
    return nv / dv


@dataclass(frozen=True)
class RawProblem:
    """Unnormalized problem data: (A, B), Sigma > 0, and raw prior samples."""

    fb: FilterBank
    sigma: np.ndarray
    psi_raw: np.ndarray
    grid: CircleGrid


def raw_problem(fb: FilterBank, sigma, psi_raw, grid: CircleGrid) -> RawProblem:
    """Validate and assemble a raw problem instance."""
    sig = as_hermitian(sigma)
    if sig.shape != (fb.n, fb.n):
        raise DimensionMismatch(f"Sigma shape {sig.shape} does not fit n={fb.n}")
    if float(np.linalg.eigvalsh(sig)[0]) <= SIGMA_MIN_EIG:
        raise SigmaNotPositiveDefinite(
            f"minimum eigenvalue of Sigma is not above {SIGMA_MIN_EIG:.1e}"
        )
    psi = np.asarray(psi_raw, dtype=np.float64)
    if psi.shape != (grid.size,):
        raise LengthMismatch(f"expected {grid.size} prior samples, got shape {psi.shape}")
    if np.any(psi <= 0.0) or not np.all(np.isfinite(psi)):
        raise NonpositivePrior("prior samples must be finite and strictly positive")
    psi = psi.copy()
    psi.flags.writeable = False
    return RawProblem(fb=fb, sigma=sig, psi_raw=psi, grid=grid)


@dataclass(frozen=True)
class Provenance:
    """Invertible record of the normalization applied to a raw problem."""

    scale: float            # c = quadrature mass of the raw prior
    whitening: np.ndarray   # (Sigma / c)^{-1/2}
    unwhitening: np.ndarray  # (Sigma / c)^{+1/2}


@dataclass(frozen=True)
class NormalizedProblem:
    """Problem with unit-mass prior and identity covariance constraint."""

    fb: FilterBank
    prior: PriorSpectrum
    response: GridResponse
    provenance: Provenance

    @property
    def n(self) -> int:
        return self.fb.n

    @property
    def grid(self) -> CircleGrid:
        return self.prior.grid

    def to_raw_spectrum(self, phi) -> np.ndarray:
        """Map a normalized-problem density back to the raw problem's scale."""
        return self.provenance.scale * np.asarray(phi, dtype=np.float64)


def normalize(raw: RawProblem) -> NormalizedProblem:
    """Rescale the prior to unit mass and whiten Sigma to the identity.

    With c the raw prior mass and Sigma_c = Sigma / c, the state space is
    transformed by A' = Sigma_c^{-1/2} A Sigma_c^{1/2}, B' = Sigma_c^{-1/2} B.
    Schur stability and reachability are similarity invariant but re-checked
    numerically on the transformed pair.  If phi solves the normalized
    problem then c * phi solves the raw one.
    """
    c = integrate_scalar(raw.grid, raw.psi_raw)
    prior = samples_prior(raw.grid, raw.psi_raw)
    sigma_c = raw.sigma / c
    w, v = np.linalg.eigh(sigma_c)
    if w[0] <= SIGMA_MIN_EIG:
        raise SigmaNotPositiveDefinite(
            "scaled covariance Sigma/c is not positive definite"
        )
    sq = np.sqrt(w)
    unwhiten = (v * sq) @ v.conj().T
    whiten = (v / sq) @ v.conj().T
    whiten = (whiten + whiten.conj().T) / 2.0
    unwhiten = (unwhiten + unwhiten.conj().T) / 2.0
    fb = validate_filterbank(whiten @ raw.fb.a @ unwhiten, whiten @ raw.fb.b)
    resp = grid_response(fb, raw.grid)
    whiten.flags.writeable = False
    unwhiten.flags.writeable = False
    return NormalizedProblem(
        fb=fb, prior=prior, response=resp,
        provenance=Provenance(scale=c, whitening=whiten, unwhitening=unwhiten),
    )


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the covariance-consistency test.

    ``certificate`` is the least-squares row H; when ``feasible`` is true,
    substituting it reproduces Sigma - A Sigma A* within ``residual``.
    """

    feasible: bool
    certificate: np.ndarray  # (n,) complex row
    residual: float


def check_feasibility(fb: FilterBank, sigma, *,
                      rtol: float = FEASIBILITY_RTOL) -> FeasibilityReport:
    """Decide whether any positive density can match the covariance Sigma.

    Solves the real-linear least-squares problem for a row H in

        Sigma - A Sigma A* = B H + H* B*

    (2n real unknowns against the n^2 real dimensions of the Hermitian
    target).  Infeasibility is a report, not an error.
    """
    sig = as_hermitian(sigma)
    n = fb.n
    if sig.shape != (n, n):
        raise DimensionMismatch(f"Sigma shape {sig.shape} does not fit n={n}")
    d = sig - fb.a @ sig @ fb.a.conj().T

    columns = []
    for k in range(n):
        for unit in (1.0, 1.0j):
            f = np.zeros((n, n), dtype=np.complex128)
            f[:, k] = fb.b * unit
            f = f + f.conj().T
            columns.append(np.concatenate([f.real.ravel(), f.imag.ravel()]))
    design = np.stack(columns, axis=1)
    target = np.concatenate([d.real.ravel(), d.imag.ravel()])
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    h = sol[0::2] + 1j * sol[1::2]

    recon = np.outer(fb.b, h)
    recon = recon + recon.conj().T
    residual = float(np.linalg.norm(d - recon))
    feasible = residual <= rtol * max(1.0, float(np.linalg.norm(d)))
    h.flags.writeable = False
    return FeasibilityReport(feasible=feasible, certificate=h, residual=residual)


def gamma_apply(resp: GridResponse, phi) -> np.ndarray:
    """The moment map: quadrature of G(theta) phi(theta) G(theta)*."""
    p = np.asarray(phi, dtype=np.float64)
    if p.shape != (resp.grid.size,):
        raise LengthMismatch(f"expected {resp.grid.size} samples, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise LengthMismatch("density samples must be finite")
    g = resp.samples
    integrand = (g[:, :, None] * g.conj()[:, None, :]) * p[:, None, None]
    return integrate_matrix(resp.grid, integrand)


def range_gamma_perp_basis(resp: GridResponse, *,
                           cutoff: float = NULLSPACE_CUTOFF) -> list[np.ndarray]:
    """Trace-orthonormal basis of {X Hermitian : G* X G = 0 on the grid}.

    Computed as the numerical nullspace (relative singular values below
    ``cutoff``) of the map X -> (G_k* X G_k)_k over the real n^2-dimensional
    space of Hermitian matrices.  The subspace is exact linear structure, not
    quadrature limited, so the dimension must agree between N and 2N nodes;
    disagreement raises :class:`NullspaceUnstable`.  An empty list is a valid
    result.
    """
    n = resp.fb.n
    basis = hermitian_basis(n)

    def null_coords(r: GridResponse) -> np.ndarray:
        m = np.stack([quadratic_form(r, e) for e in basis], axis=1)
        _, svals, vt = np.linalg.svd(m, full_matrices=True)
        smax = svals[0] if svals.size else 0.0
        keep = np.ones(n * n, dtype=bool)
        keep[: svals.size] = svals > cutoff * smax
        return vt[~keep]

    coords = null_coords(resp)
    doubled = grid_response(resp.fb, circle_grid(2 * resp.grid.size))
    dim2 = len(null_coords(doubled))
    if len(coords) != dim2:
        raise NullspaceUnstable(
            f"nullspace dimension {len(coords)} at N={resp.grid.size} but "
            f"{dim2} at N={2 * resp.grid.size}"
        )

    out = []
    for row in coords:
        x = sum(c * e for c, e in zip(row, basis))
        x = (x + x.conj().T) / 2.0
        x.flags.writeable = False
        out.append(x)
    return out


def kl_divergence(prior: PriorSpectrum, phi) -> float:
    """Divergence of a density from the prior: quadrature of psi log(psi/phi).

    The prior sits in the first slot of the log ratio; phi, the density being
    scored, appears only in the denominator.  phi need not have unit mass.
    """
    p = np.asarray(phi, dtype=np.float64)
    if p.shape != (prior.grid.size,):
        raise LengthMismatch(f"expected {prior.grid.size} samples, got shape {p.shape}")
    if np.any(p <= 0.0) or not np.all(np.isfinite(p)):
        raise NonpositivePhi("phi must be finite and strictly positive")
    return integrate_scalar(prior.grid, prior.psi * np.log(prior.psi / p))
