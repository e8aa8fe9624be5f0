"""Exception hierarchy shared by every module."""


class ContractError(ValueError):
    """An operation was called with inputs outside its contract."""


class SingularityError(ContractError):
    """A Riesz kernel was evaluated at coincident points."""


class ConfigError(ValueError):
    """A run configuration is malformed or names an unknown key."""


class ConvergenceError(RuntimeError):
    """The equilibrium solver hit its iteration cap above tolerance.

    The last iterate is attached as ``solution`` so callers can still inspect
    it; ``residual`` is the relative Euler-Lagrange residual reached.
    """

    def __init__(self, message, residual=float("nan"), solution=None):
        super().__init__(message)
        self.residual = residual
        self.solution = solution
