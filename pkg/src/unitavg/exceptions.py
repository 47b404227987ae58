"""Exception types raised by unitavg."""


class UnitAveragingError(Exception):
    """Base class for all unitavg errors."""


class PanelFormatError(UnitAveragingError):
    """Malformed panel CSV input."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EstimationError(UnitAveragingError):
    """A unit-level fit failed (series too short or singular design)."""


class FocusSingularityError(UnitAveragingError):
    """Focus function evaluated at a point where it is undefined."""


class DimensionError(UnitAveragingError):
    """Inputs with incompatible dimensions."""


class InfeasibleWeightsError(UnitAveragingError):
    """Weight vector outside the feasible set of the requested regime."""


class SolverError(UnitAveragingError):
    """QP solver did not converge; carries the best iterate found."""

    def __init__(self, message: str, best_x=None, residual: float | None = None):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual


class ConfigError(UnitAveragingError):
    """Invalid model, simulation, or limit-experiment configuration."""
