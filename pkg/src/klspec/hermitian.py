"""Complex Hermitian matrix primitives.

Everything operates on small dense ``complex128`` arrays.  All functions are
pure and all returned arrays are marked read-only, so values can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NonHermitianInput,
    NotPositiveSemidefinite,
    NotUnitTrace,
)

# Relative Frobenius-norm tolerance for accepting a matrix as Hermitian.
HERMITICITY_RTOL = 1e-12

# Eigenvalues in [EIG_CLAMP_FLOOR, 0) are treated as exact zeros; anything
# more negative is rejected so that quadrature noise cannot silently flip
# definiteness.
EIG_CLAMP_FLOOR = -1e-10

# Absolute tolerance on |trace - 1| at StateMatrix construction.
TRACE_TOL = 1e-10


def as_hermitian(m, *, rtol: float = HERMITICITY_RTOL) -> np.ndarray:
    """Validate that ``m`` is Hermitian and return it exactly symmetrized.

    Asymmetry beyond ``rtol * ||M||_F`` raises :class:`NonHermitianInput`;
    smaller asymmetry (roundoff) is averaged away.
    """
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonHermitianInput("matrix contains non-finite entries")
    asym = np.linalg.norm(a - a.conj().T)
    if asym > rtol * np.linalg.norm(a):
        raise NonHermitianInput(
            f"asymmetry {asym:.3e} exceeds {rtol:.1e} of the Frobenius norm"
        )
    out = (a + a.conj().T) / 2.0
    out.flags.writeable = False
    return out


def _clamped_psd_eigs(w: np.ndarray, *, floor: float = EIG_CLAMP_FLOOR) -> np.ndarray:
    if w[0] < floor:
        raise NotPositiveSemidefinite(
            f"minimum eigenvalue {w[0]:.3e} lies below the clamp floor {floor:.1e}"
        )
    return np.where(w < 0.0, 0.0, w)


@dataclass(frozen=True)
class StateMatrix:
    """Hermitian, positive semi-definite matrix with unit trace.

    The iteration variable of the fixed-point solver.  The minimum eigenvalue
    and trace are cached at construction; the matrix itself is read-only.
    """

    matrix: np.ndarray
    min_eig: float
    trace: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def state_matrix(m, *, clamp_floor: float = EIG_CLAMP_FLOOR,
                 trace_tol: float = TRACE_TOL) -> StateMatrix:
    """Build a :class:`StateMatrix` from a Hermitian input.

    Eigenvalues in ``[clamp_floor, 0)`` are set to zero, the trace must equal
    one within ``trace_tol``, and the result is renormalized to unit trace by
    a single division.  Renormalization happens only here, never silently in
    downstream operations, so trace drift stays observable in tests.
    """
    h = as_hermitian(m)
    w, v = np.linalg.eigh(h)
    w = _clamped_psd_eigs(w, floor=clamp_floor)
    t = float(np.sum(w))
    if abs(t - 1.0) > trace_tol:
        raise NotUnitTrace(f"trace {t!r} differs from 1 by more than {trace_tol:.1e}")
    w = w / t
    mat = (v * w) @ v.conj().T
    mat = (mat + mat.conj().T) / 2.0
    mat.flags.writeable = False
    return StateMatrix(matrix=mat, min_eig=float(w.min()),
                       trace=float(np.trace(mat).real))


def identity_state(n: int) -> StateMatrix:
    """The scaled identity I/n, the interior default start of the solver."""
    mat = np.eye(n, dtype=np.complex128) / n
    mat.flags.writeable = False
    return StateMatrix(matrix=mat, min_eig=1.0 / n, trace=1.0)


def principal_sqrt(m) -> np.ndarray:
    """Principal square root of a PSD Hermitian matrix.

    Computed by full eigendecomposition: n is small, and exactness of the
    principal branch matters more than speed.  Eigenvalues inside the clamp
    window count as zero.
    """
    h = m.matrix if isinstance(m, StateMatrix) else as_hermitian(m)
    w, v = np.linalg.eigh(h)
    w = _clamped_psd_eigs(w)
    s = (v * np.sqrt(w)) @ v.conj().T
    s = (s + s.conj().T) / 2.0
    s.flags.writeable = False
    return s


def trace_inner(x, y) -> float:
    """Real trace inner product tr(X Y*) of two Hermitian matrices."""
    a = as_hermitian(x)
    b = as_hermitian(y)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    # tr(X Y*) = sum_ij X_ij conj(Y_ij); Hermitian arguments force a real
    # value, the imaginary residue is roundoff and discarded.
    return float(np.vdot(b, a).real)


def min_eigenvalue(m) -> float:
    """Smallest eigenvalue of a Hermitian matrix."""
    h = m.matrix if isinstance(m, StateMatrix) else as_hermitian(m)
    return float(np.linalg.eigvalsh(h)[0])


def hermitian_basis(n: int) -> list[np.ndarray]:
    """Trace-orthonormal real basis of the n x n Hermitian matrices.

    n diagonal units followed by (real, imaginary) off-diagonal pairs;
    n**2 elements in a fixed deterministic order.
    """
    basis: list[np.ndarray] = []
    for i in range(n):
        e = np.zeros((n, n), dtype=np.complex128)
        e[i, i] = 1.0
        basis.append(e)
    r = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, j] = r
            e[j, i] = r
            basis.append(e)
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, j] = 1j * r
            e[j, i] = -1j * r
            basis.append(e)
    for e in basis:
        e.flags.writeable = False
    return basis
