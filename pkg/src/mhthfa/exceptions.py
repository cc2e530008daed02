"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a function."""


class UnsupportedDimensionError(ValueError):
    """A Gaussian orthant computation was requested for r > 3."""


class DegenerateTruncationError(ArithmeticError):
    """The probability of the truncation region underflowed."""


class NonSPDError(ValueError):
    """A matrix that must be symmetric positive definite is not."""


class ConstraintViolation(ValueError):
    """The (p, q, r) dimensions violate the factor-model constraints."""

    def __init__(self, message, failed=None):
        super().__init__(message)
        self.failed = failed


class DegenerateLikelihoodError(ArithmeticError):
    """Every component density underflowed for some observation."""


class ComponentCollapseError(RuntimeError):
    """A mixture component lost (almost) all of its responsibility mass."""


class FitFailure(RuntimeError):
    """Every initialization of a fit collapsed or diverged."""


class SchemaVersionError(ValueError):
    """A serialized model uses an unsupported schema version."""
