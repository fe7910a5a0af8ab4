"""Exception hierarchy."""


class SPError(Exception):
    """Base class for all solver errors."""


class DegenerateLattice(SPError):
    pass


class NonNeutralSource(SPError):
    pass


class SingularPoint(SPError):
    pass


class IonsCoincide(SPError):
    pass


class IonsCollapsed(SPError):
    pass


class ZeroField(SPError):
    pass


class InvalidInput(SPError, ValueError):
    """Raised when a constructor argument violates a type invariant."""


class NotConverged(SPError):
    """The minimizer stopped before meeting its tolerances.

    The best state found is attached as ``state``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
