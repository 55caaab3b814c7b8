"""Exception hierarchy shared by all modules."""


class DispatchError(Exception):
    """Base class for every error raised by ctdispatch."""


class ParseError(DispatchError):
    """Input file could not be read or does not follow the schema."""


class ValidationError(DispatchError, ValueError):
    """A domain invariant is violated; the message names the field."""


class OutOfHorizon(DispatchError, ValueError):
    """Time instant lies outside the load profile horizon."""


class InfeasibleDispatch(DispatchError):
    """The dispatch problem has no feasible solution."""


class CapacityShortfall(ValidationError, InfeasibleDispatch):
    """Committed capacity cannot cover the load somewhere on the horizon."""


class LpError(DispatchError):
    pass


class Infeasible(LpError):
    """Linear program is infeasible.

    ``certificate`` holds a dual ray ``(lam, mu)`` with ``mu >= 0``,
    ``A_eq.T @ lam - A_ie.T @ mu == 0`` and ``b_eq @ lam - b_ie @ mu > 0``.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class Unbounded(LpError):
    """Linear program is unbounded; ``ray`` is a feasible descent direction."""

    def __init__(self, message, ray=None):
        super().__init__(message)
        self.ray = ray


class NumericalFailure(LpError):
    pass


class DegenerateRegion(DispatchError):
    """Active-set KKT system stayed singular after the degeneracy policy."""


class InfeasiblePoint(DispatchError):
    """Parameter point is outside the feasible parameter set."""


class ExplorationOverflow(DispatchError):
    pass


class RootIsolationFailure(DispatchError):
    pass


class EndpointSetMismatch(DispatchError):
    pass


class MaxIterationsExceeded(DispatchError):
    """Iteration cap reached; ``state`` carries the last iteration state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class WindowCrossesEndpoint(DispatchError):
    pass
