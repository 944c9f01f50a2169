class PoissonBalanceError(ValueError):
    """Base class for every error raised by the library."""


class InstanceFormatError(PoissonBalanceError):
    """An instance, assignment or config document could not be parsed."""


class SolverError(PoissonBalanceError):
    """A solver could not produce an assignment."""


class InfeasibleError(SolverError):
    """No assignment satisfies the constraints of the integer program."""


class GuardError(SolverError):
    """A size guard, hypothesis or parameter range was violated."""


class ConfigExplosionError(GuardError):
    """The configuration set or the DP state space exceeds its budget."""


class RoundingError(SolverError):
    """Un-rounding broke its per-machine load bound or lost jobs."""


class PeelExhaustedError(SolverError):
    """Peeling would consume every machine while jobs remain."""
