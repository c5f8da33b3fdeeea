"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ResourceError(RuntimeError):
    """A requested object would exceed a configured size limit."""


class NumericError(ArithmeticError):
    """An iterative or quadrature routine failed to reach its tolerance."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
