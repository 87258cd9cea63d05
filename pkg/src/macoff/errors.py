"""Exception hierarchy shared by the solvers."""


class MacoffError(Exception):
    """Base class for all solver errors."""


class InvalidConfig(MacoffError, ValueError):
    """Bad scenario, cell-model or experiment configuration."""


class InfeasibleUser(MacoffError):
    """A user cannot meet its deadline in the requested mode."""

    def __init__(self, message, users=()):
        super().__init__(message)
        self.users = tuple(users)


class OverflowDomain(MacoffError):
    """Sum of rates too large to evaluate the power formulas in double precision."""


class SolverStall(MacoffError):
    """Iterative solver exhausted its iteration budget."""


class OutOfBracket(MacoffError):
    """A rate produced an offload fraction outside [0, 1]."""


class NonMonotone(MacoffError):
    """Coordinate descent objective increased; indicates a bug."""


class TooLarge(MacoffError):
    """Problem size exceeds what a brute-force routine will enumerate."""


class Degenerate(MacoffError):
    """Every candidate linear system was singular."""
