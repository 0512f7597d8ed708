"""Exception hierarchy shared by every module of the package."""


class WaveInvError(Exception):
    """Base class for all errors raised by waveinv."""


class DimensionError(WaveInvError, ValueError):
    """Grid mismatch or array length inconsistent with the grid."""


class DomainError(WaveInvError, ValueError):
    """Evaluation point outside of the unit interval."""


class ParameterError(WaveInvError, ValueError):
    """A parameter violates the inequality that makes it admissible."""


class PreconditionError(WaveInvError, ValueError):
    """An input does not satisfy the hypotheses an operation relies on."""


class ConfigurationError(WaveInvError, ValueError):
    """Invalid experiment or solver configuration."""


class QuadratureOrderError(WaveInvError, ArithmeticError):
    """Quadrature is not accurate enough to reproduce an exact identity."""


class InternalConsistencyError(WaveInvError, ArithmeticError):
    """An algebraic identity that holds by construction was violated."""


class DivergenceError(WaveInvError, ArithmeticError):
    """Time stepping produced a non-finite value."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite value produced at time step {step}")
