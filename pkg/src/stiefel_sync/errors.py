"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Matrix dimensions violate a precondition (shape mismatch or p outside [1, n))."""


class RetractionError(RuntimeError):
    """Retraction argument is numerically rank-deficient."""

    def __init__(self, message, sigma_min=None, sigma_max=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max


class IntegrationError(RuntimeError):
    """Time integration produced nonfinite values."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class NotEquilibriumError(ValueError):
    """An operation defined only at equilibria was called on a non-equilibrium state."""

    def __init__(self, message, max_residual=None):
        super().__init__(message)
        self.max_residual = max_residual


class ConvergenceError(RuntimeError):
    """Iterative solver exhausted its budget; carries the best iterate found."""

    def __init__(self, message, best_value=None, best_x=None, best_y=None):
        super().__init__(message)
        self.best_value = best_value
        self.best_x = best_x
        self.best_y = best_y


class GraphError(ValueError):
    """Invalid graph construction request."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
