"""Exception hierarchy."""


class PolyembedError(Exception):
    """Base class for library errors."""


class InvalidGeometryError(PolyembedError, ValueError):
    """Polygon violates convexity, orientation or coordinate conventions."""


class RationalityError(InvalidGeometryError):
    """An external angle is not a (detectable) rational multiple of pi."""


class InfeasibleCanonicalSetError(PolyembedError, ValueError):
    """Fewer canonical angles than points in the symmetric set."""


class CanonicalSelectionError(PolyembedError, RuntimeError):
    """Random canonical-angle selection exhausted its retries."""


class SolverDomainError(PolyembedError, ValueError):
    """Non-positive wavenumber or invalid discretisation request."""


class SolverConditioningError(PolyembedError, RuntimeError):
    """Least-squares system numerically rank deficient beyond threshold."""


class DerivativeOrderError(PolyembedError, ValueError):
    """Requested derivative order exceeds the configured maximum."""


class EmbeddingSystemError(PolyembedError, RuntimeError):
    """The canonical B-system is singular or too ill-conditioned."""


class DispatchError(PolyembedError, ValueError):
    """An embedding branch was called outside its precondition."""


class DegenerateDenominatorError(DispatchError):
    """The stable denominator series has a vanishing leading term."""


class OutOfValidityError(PolyembedError, ValueError):
    """Evaluation point inside the enclosing ball of a T-matrix."""


class CacheFormatError(PolyembedError, ValueError):
    """A solution or T-matrix file is malformed."""
