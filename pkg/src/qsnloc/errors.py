"""Exception hierarchy shared by every module of the package."""


class QsnLocError(Exception):
    """Base class for all errors raised by qsnloc."""


class DimensionMismatch(QsnLocError, ValueError):
    pass


class NotHermitian(QsnLocError, ValueError):
    pass


class NegativeEigenvalue(QsnLocError, ValueError):
    pass


class OutOfRange(QsnLocError, ValueError):
    pass


class TooClose(QsnLocError, ValueError):
    """A transmitter is closer to a sensor than the 5 m minimum separation."""


class UnsupportedCount(QsnLocError, ValueError):
    pass


class ExhaustedRejection(QsnLocError, RuntimeError):
    """Rejection sampling could not find a feasible transmitter location."""


class TooManyQubits(QsnLocError, ValueError):
    pass


class DegenerateTargets(QsnLocError, ValueError):
    pass


class NotNormalized(QsnLocError, ValueError):
    """Outcome probabilities do not sum to one (corrupted POVM or state)."""


class EmptyBatch(QsnLocError, ValueError):
    pass


class ConfigError(QsnLocError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
