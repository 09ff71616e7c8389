"""Exception types shared across the package."""


class DomainError(ValueError):
    """A value lies outside the domain an operation accepts."""


class NumericalError(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class FactorizationError(NumericalError):
    """Cholesky factorization failed; ``pivot`` is the 1-based failing minor."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularDesignError(NumericalError):
    """A regression design matrix is rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class ConfigError(ValueError):
    """A run configuration is invalid."""


class EvaluationError(RuntimeError):
    """A black-box evaluation failed."""
