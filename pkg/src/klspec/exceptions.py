"""Exception hierarchy for the klspec package."""


class KLSpecError(Exception):
    """Base class for all klspec errors."""


class NonHermitianInput(KLSpecError):
    """A matrix expected to be Hermitian is asymmetric beyond tolerance."""


class DimensionMismatch(KLSpecError):
    """Two operands have incompatible shapes."""


class LengthMismatch(KLSpecError):
    """A sample array does not match the grid length."""


class NotPositiveSemidefinite(KLSpecError):
    """An eigenvalue lies below the PSD clamp floor."""


class NotUnitTrace(KLSpecError):
    """A state matrix candidate has trace too far from one."""


class NotSchurStable(KLSpecError):
    """The state matrix has spectral radius at or beyond the stability margin."""


class NotReachable(KLSpecError):
    """The reachability matrix of (A, B) is numerically rank deficient."""


class InvalidGrid(KLSpecError):
    """Grid size is not a power of two >= 64, or too small for the problem."""


class SigmaNotPositiveDefinite(KLSpecError):
    """The covariance constraint matrix is not positive definite."""


class NonpositivePrior(KLSpecError):
    """A prior density is not strictly positive on the grid."""


class NonpositivePhi(KLSpecError):
    """A spectral density argument is not strictly positive."""


class BoundaryProximity(KLSpecError):
    """The grid quadratic form G* L G dips below the denominator guard."""


class LogOfNonpositive(KLSpecError):
    """The log integrand of the dual cost is nonpositive at some node."""


class LogSingularDirection(KLSpecError):
    """Directional derivative requested where the denominator vanishes."""


class Cond1Violated(KLSpecError):
    """Spectrum reconstruction requested without a positive denominator."""


class UnsupportedDimension(KLSpecError):
    """Operation only defined for state dimension two."""


class LineSearchStalled(KLSpecError):
    """Backtracking step shrank below the hard floor without acceptance."""


class MaxIterationsExceeded(KLSpecError):
    """An iterative solver hit its iteration budget (hard-error variant)."""


class MonotonicityViolation(KLSpecError):
    """The dual cost increased beyond quadrature slack along the iteration.

    This falsifies the implementation, not the underlying theory, so it is a
    hard error rather than a report outcome.
    """


class NullspaceUnstable(KLSpecError):
    """The moment-map nullspace dimension changed under grid doubling."""
