"""Exception types shared across the package."""


class SubdeqError(Exception):
    """Base class for all library-specific errors."""


class DimensionError(SubdeqError, ValueError):
    """A shape or size is unusable: empty vector, mismatch, zero dimension."""


class ParameterError(SubdeqError, ValueError):
    """A numeric parameter is outside its allowed range."""


class DegenerateIterateError(SubdeqError, ArithmeticError):
    """An iterate collapsed to zero, so the relative residual is undefined."""


class ConeViolationError(SubdeqError, ValueError):
    """A value left the open positive cone required by the Thompson metric."""


class DomainViolationError(SubdeqError, ValueError):
    """A sampled point is outside the operator's positivity domain."""


class NoCertificateError(SubdeqError, ValueError):
    """No subhomogeneity certificate can be granted for the requested object.

    For purely homogeneous operator trees the homogeneity degree is still
    known and is attached as ``homogeneity``.
    """

    def __init__(self, message: str, homogeneity: float | None = None):
        super().__init__(message)
        self.homogeneity = homogeneity


class UncertifiedLayerError(SubdeqError, ValueError):
    """Layer construction refused: the contraction threshold is not met."""


class DivergenceError(SubdeqError, RuntimeError):
    """A fixed-point iteration produced non-finite values."""


class InsufficientDataError(SubdeqError, ValueError):
    """Not enough trace data for the requested estimate."""


class ProbeFailureError(SubdeqError, RuntimeError):
    """A multi-start probe could not complete; a start failed to converge."""


class IllConditionedEquilibriumError(SubdeqError, RuntimeError):
    """The implicit-gradient linear solve did not converge."""


class TrainingFailureError(SubdeqError, RuntimeError):
    """The training loss became non-finite."""


class GraphParseError(SubdeqError, ValueError):
    """An edge-list file could not be parsed."""


class EdgeRangeError(SubdeqError, IndexError):
    """An edge references a node index outside the declared node count."""
