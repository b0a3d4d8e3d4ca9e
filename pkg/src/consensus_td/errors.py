"""Exception types shared across the package."""


class ConsensusTDError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(ConsensusTDError, ValueError):
    """Array arguments have incompatible shapes."""


class ReducibleChainError(ConsensusTDError, ValueError):
    """The transition matrix does not form a single communicating class."""


class NoConvergenceError(ConsensusTDError, RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class SingularMatrixError(ConsensusTDError, ValueError):
    """A dense solve encountered a pivot below the singularity threshold."""


class SingularGramError(ConsensusTDError, ValueError):
    """The feature Gram matrix is numerically singular."""


class NotPositiveDefiniteError(ConsensusTDError, ValueError):
    """The steady-state matrix fails the positive-definiteness requirement."""


class RankDeficientError(ConsensusTDError, ValueError):
    """Generated features remained rank deficient after all retries."""


class InvalidEdgeError(ConsensusTDError, ValueError):
    """An edge references a node out of range or is a self-loop."""


class NeverConnectedError(ConsensusTDError, ValueError):
    """The union of all edge sets in the schedule is disconnected."""


class DegenerateEtaError(ConsensusTDError, ValueError):
    """The schedule's contraction factor is zero; envelopes are undefined."""


class UnsupportedPlanError(ConsensusTDError, ValueError):
    """The stepsize plan does not match the requested bound."""


class StepsizeOutOfRangeError(ConsensusTDError, ValueError):
    """The stepsize violates the admissible range for the requested bound."""


class NonFiniteValueError(ConsensusTDError, FloatingPointError):
    """A non-finite intermediate appeared during simulation."""

    def __init__(self, k: int, message: str = ""):
        self.k = k
        super().__init__(message or f"non-finite value at iteration k={k}")


class ConfigError(ConsensusTDError, ValueError):
    """An experiment configuration is malformed."""
