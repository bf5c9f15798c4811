"""Exception types raised by the solver and its supporting operations."""


class SimulationError(Exception):
    """Base class for all solver failures."""


class DegenerateInput(SimulationError):
    """Input violates a structural precondition (grid size, field shape, ...)."""


class ConfigError(SimulationError):
    """Run configuration is malformed or inconsistent."""


class SingularJacobian(SimulationError):
    """Deformation-gradient determinant fell below the safe floor."""


class SeriesDiverged(SimulationError):
    """Neumann series cannot converge: accumulated gradient integral >= 1."""


class NoConvergence(SimulationError):
    """A fixed-point iteration hit its iteration cap; carries the residual."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ContractionViolated(SimulationError):
    """||A - Id|| exceeds the contraction threshold of the twisted solve."""


class CompatibilityViolated(SimulationError):
    """Initial data incompatible with the prescribed divergence."""


class PicardNoConvergence(NoConvergence):
    """Variable-density Picard loop failed; expected when the density jump
    ratio is too large for the semi-implicit splitting."""


class CflViolation(SimulationError):
    """Time step exceeds the advective CFL bound."""


class SelfIntersection(SimulationError):
    """Interface marker polygon is no longer simple."""


class SmallnessWarning(UserWarning):
    """Accumulated Lagrangian gradient integral exceeded the smallness cap;
    the run continues but flow-map guarantees degrade."""
