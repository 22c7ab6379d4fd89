"""Exception types shared across the engine."""


class ManikinError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(ManikinError):
    """Bad model definition: topology, dimensions, invalid indices."""


class SchemaError(ConfigurationError):
    """A scenario or chain file failed validation; message carries the field path."""


class NumericalFaultError(ManikinError):
    """Non-finite values reached a solver or integrator."""


class SingularMatrixError(ManikinError):
    """A matrix required to be invertible is singular (or nearly so)."""


class ConstructionFailedError(ManikinError):
    """A counterexample could not be assembled from the given seed."""


class LcpConvergenceError(ManikinError):
    """The complementarity solver did not reach tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepError(ManikinError):
    """A simulation step aborted; carries the step index and the cause."""

    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index} failed: {cause}")
        self.step_index = step_index
        self.cause = cause
