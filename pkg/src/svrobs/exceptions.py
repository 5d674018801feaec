"""Exception hierarchy shared by all modules."""


class SvrObsError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SvrObsError, ValueError):
    pass


class NonConvergence(SvrObsError, RuntimeError):
    pass


class UnstableDynamics(SvrObsError, ValueError):
    """A stability precondition (spectral radius < 1) does not hold."""


class UnstableLoop(UnstableDynamics):
    """The observer error dynamics are not contractive."""


class SingularInnovation(SvrObsError, ArithmeticError):
    pass


class SingularGram(SvrObsError, ArithmeticError):
    """The regressor Gram matrix is numerically singular."""


class EmptyData(SvrObsError, ValueError):
    pass


class RankDeficientC(SvrObsError, ValueError):
    pass


class PremiseViolated(SvrObsError, ValueError):
    """The small-error premise of the optimal-observer bound fails."""


class ConfigError(SvrObsError, ValueError):
    pass
