"""Exception hierarchy shared across the package.

CLI exit codes map onto these: ConfigError -> 2, ResourceError -> 3.
"""


class PdhjbError(Exception):
    """Base class for all package-specific errors."""


class DomainError(PdhjbError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedError(PdhjbError):
    """The inputs are valid but the operation does not support them."""


class DivergenceError(PdhjbError):
    """An iterative search failed to bracket or converge."""


class OptimizationFailure(PdhjbError):
    """No restart of a multi-start optimization converged."""


class ResourceError(PdhjbError):
    """A configured resource budget (node count, memory) would be exceeded."""

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class ConfigError(PdhjbError):
    """Experiment configuration is malformed or fails schema validation."""
