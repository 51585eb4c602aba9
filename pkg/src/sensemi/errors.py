"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A config file failed to parse or validate."""


class DomainError(ValueError):
    """An input violates a documented precondition."""


class InfeasibleError(RuntimeError):
    """The requested constraint set is empty at the given parameters."""


class NumericalError(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """An iteration hit its cap before reaching the requested tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StallError(NumericalError):
    """A line search exhausted its backtracking budget."""

    def __init__(self, message: str, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ConventionError(NumericalError):
    """No admissible derivative convention matches the observed differences."""
