"""Rational filter bank G(z) = (zI - A)^{-1} B and unit-circle quadrature.

The filter bank is validated for Schur stability and reachability once, its
frequency response is cached on a uniform grid, and all integrals in the
package are midpoint sums on that shared grid.  Midpoint rules on uniform
periodic grids converge spectrally for the smooth rational integrands that
appear here, and sharing one grid makes algebraic identities (unit trace of
the fixed-point map, for instance) hold to machine precision instead of
quadrature precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    InvalidGrid,
    LengthMismatch,
    NotReachable,
    NotSchurStable,
)

# Poles closer than this to the unit circle make the integrands near-singular
# for the default grid; such banks are rejected rather than silently degraded.
STABILITY_MARGIN = 1e-9

# Relative smallest-singular-value cutoff for the reachability matrix.
REACHABILITY_RTOL = 1e-9

DEFAULT_GRID_SIZE = 2048
MIN_GRID_SIZE = 64


@dataclass(frozen=True)
class FilterBank:
    """Validated state-space pair defining G(z) = (zI - A)^{-1} B."""

    a: np.ndarray           # (n, n) complex, Schur stable
    b: np.ndarray           # (n,) complex, reachable together with ``a``
    spectral_radius: float

    @property
    def n(self) -> int:
        return self.a.shape[0]


def validate_filterbank(a, b, *, stability_margin: float = STABILITY_MARGIN,
                        reachability_rtol: float = REACHABILITY_RTOL) -> FilterBank:
    """Check Schur stability and reachability of (A, B).

    ``b`` may be given as a length-n vector or an (n, 1) column.  Raises
    :class:`NotSchurStable` or :class:`NotReachable` on rejection.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {a.shape}")
    n = a.shape[0]
    b = np.asarray(b, dtype=np.complex128)
    if b.ndim == 2 and b.shape == (n, 1):
        b = b[:, 0]
    if b.shape != (n,):
        raise DimensionMismatch(f"B must be an (n,) vector or (n,1) column, got {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DimensionMismatch("A and B must be finite")

    rho = float(np.max(np.abs(np.linalg.eigvals(a))))
    if rho >= 1.0 - stability_margin:
        raise NotSchurStable(
            f"spectral radius {rho!r} is not below 1 - {stability_margin:.1e}"
        )

    reach = np.empty((n, n), dtype=np.complex128)
    col = b
    for k in range(n):
        reach[:, k] = col
        col = a @ col
    svals = np.linalg.svd(reach, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] <= reachability_rtol * svals[0]:
        raise NotReachable(
            f"reachability matrix has relative smallest singular value "
            f"{svals[-1] / svals[0] if svals[0] else 0.0:.3e}"
        )

    a = a.copy()
    b = b.copy()
    a.flags.writeable = False
    b.flags.writeable = False
    return FilterBank(a=a, b=b, spectral_radius=rho)


def eval_G(fb: FilterBank, theta: float) -> np.ndarray:
    """Frequency response G(e^{i theta}), one linear solve per call."""
    z = np.exp(1j * theta)
    return np.linalg.solve(z * np.eye(fb.n) - fb.a, fb.b)


@dataclass(frozen=True)
class CircleGrid:
    """Uniform grid theta_k = -pi + 2 pi k / N on [-pi, pi), weight 1/N each.

    Weights realize the normalized Lebesgue measure on the circle.
    """

    size: int
    nodes: np.ndarray

    @property
    def weight(self) -> float:
        return 1.0 / self.size


def circle_grid(size: int = DEFAULT_GRID_SIZE) -> CircleGrid:
    """Build a grid; ``size`` must be a power of two, at least 64."""
    if size < MIN_GRID_SIZE or (size & (size - 1)) != 0:
        raise InvalidGrid(f"grid size must be a power of two >= {MIN_GRID_SIZE}, got {size}")
    nodes = -np.pi + 2.0 * np.pi * np.arange(size) / size
    nodes.flags.writeable = False
    return CircleGrid(size=size, nodes=nodes)


@dataclass(frozen=True)
class GridResponse:
    """Filter responses cached on a grid: samples[k] = G(e^{i theta_k})."""

    fb: FilterBank
    grid: CircleGrid
    samples: np.ndarray  # (N, n) complex


def grid_response(fb: FilterBank, grid: CircleGrid) -> GridResponse:
    """Evaluate G on every node with one batched linear solve."""
    z = np.exp(1j * grid.nodes)
    systems = z[:, None, None] * np.eye(fb.n) - fb.a[None, :, :]
    rhs = np.broadcast_to(fb.b[None, :, None], (grid.size, fb.n, 1))
    samples = np.linalg.solve(systems, rhs)[:, :, 0]
    samples = np.ascontiguousarray(samples)
    samples.flags.writeable = False
    return GridResponse(fb=fb, grid=grid, samples=samples)


def integrate_scalar(grid: CircleGrid, samples) -> float:
    """Midpoint quadrature (1/N) sum of real samples over the grid.

    The accumulation order is numpy's fixed pairwise tree, so results are
    bit-reproducible across runs.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.shape != (grid.size,):
        raise LengthMismatch(f"expected {grid.size} samples, got shape {s.shape}")
    return float(np.sum(s) / grid.size)


def integrate_matrix(grid: CircleGrid, samples) -> np.ndarray:
    """Entrywise midpoint quadrature of Hermitian-valued samples.

    The result is re-Hermitized (averaged with its adjoint) to scrub the
    roundoff asymmetry of the sum.
    """
    s = np.asarray(samples, dtype=np.complex128)
    if s.ndim != 3 or s.shape[0] != grid.size:
        raise LengthMismatch(f"expected ({grid.size}, n, n) samples, got shape {s.shape}")
    if s.shape[1] != s.shape[2]:
        raise DimensionMismatch(f"samples must be square matrices, got shape {s.shape}")
    m = np.sum(s, axis=0) / grid.size
    m = (m + m.conj().T) / 2.0
    m.flags.writeable = False
    return m


def quadratic_form(resp: GridResponse, matrix) -> np.ndarray:
    """Samples of the real quadratic form G(theta)* M G(theta) over the grid."""
    m = np.asarray(matrix, dtype=np.complex128)
    if m.shape != (resp.fb.n, resp.fb.n):
        raise DimensionMismatch(f"matrix of shape {m.shape} does not fit n={resp.fb.n}")
    g = resp.samples
    return np.einsum("ki,ij,kj->k", g.conj(), m, g).real
