class PolyToptError(Exception):
    """Base class for all package errors."""


class DegenerateGradientError(PolyToptError, ValueError):
    pass


class UnboundedDomainError(PolyToptError, ValueError):
    pass


class SeedPlacementError(PolyToptError, RuntimeError):
    """Rejection sampling acceptance rate collapsed."""


class DegenerateCellError(PolyToptError, RuntimeError):
    pass


class HullError(PolyToptError, ValueError):
    pass


class GeometryError(PolyToptError, ValueError):
    """Invalid element geometry (zero or negative volume, non-planar face...)."""


class SolverError(PolyToptError, RuntimeError):
    """Iterative solve did not converge or the system is singular."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OptimizerError(PolyToptError, RuntimeError):
    pass


class ConfigError(PolyToptError, ValueError):
    pass
