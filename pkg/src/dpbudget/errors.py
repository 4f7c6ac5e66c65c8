"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes; see ``dpbudget.cli``.
"""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class UsageError(RuntimeError):
    """An API object was used in a way its mode or state does not allow."""


class PreconditionError(RuntimeError):
    """A documented precondition (e.g. a sampling-ratio bound) is violated."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge to the requested accuracy."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """A schedule or run configuration is internally inconsistent."""


class ParseError(ValueError):
    """A data file does not conform to its expected format."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InfeasibleTargetError(ValueError):
    """No grid value of the searched hyperparameter attains the target."""
