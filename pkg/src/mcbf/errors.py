"""Exception types raised across the package."""


class MCBFError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(MCBFError, ValueError):
    pass


class ModelError(MCBFError, ValueError):
    pass


class InvalidParameter(MCBFError, ValueError):
    pass


class UnboundedSet(MCBFError, ValueError):
    pass


class UnsupportedStrategy(MCBFError, ValueError):
    pass


class SolverInfeasible(MCBFError):
    """The barrier condition cannot be met at the sampled state."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DivergedError(MCBFError, ArithmeticError):
    pass


class InitialStateUnsafe(MCBFError):
    pass


class UnknownScenario(MCBFError, KeyError):
    pass


class ScenarioParseError(MCBFError, ValueError):
    pass


class ScenarioValidationError(MCBFError, ValueError):
    pass
