"""Exception hierarchy shared by all modules."""


class BCnError(Exception):
    """Base class for every error raised by this package."""


class NonInvertible(BCnError, ValueError):
    pass


class NotUnimodular(BCnError, ValueError):
    pass


class NotUnitary(BCnError, ValueError):
    pass


class NotHermitian(BCnError, ValueError):
    pass


class Singular(BCnError, ValueError):
    pass


class DegeneratePosition(BCnError, ValueError):
    pass


class ZeroDeformation(BCnError, ValueError):
    pass


class DomainViolation(BCnError, ValueError):
    pass


class CouplingViolation(BCnError, ValueError):
    pass


class OffDenseLocus(BCnError, ValueError):
    pass


class OffShell(BCnError, ValueError):
    pass


class CoincidentComponents(BCnError, ValueError):
    pass


class PoleProximity(BCnError, ArithmeticError):
    pass


class FDBreakdown(BCnError, ArithmeticError):
    pass


class BoundaryReached(BCnError, RuntimeError):
    """The local-chart flow came within the event threshold of a chamber wall.

    Attributes
    ----------
    t : float
        Time at which the event fired.
    state : ndarray
        Local state ``(p_hat, q_hat)`` at that time.
    trajectory : Trajectory or None
        Samples recorded up to the event.
    """

    def __init__(self, message, t=None, state=None, trajectory=None):
        super().__init__(message)
        self.t = t
        self.state = state
        self.trajectory = trajectory


class StepFailure(BCnError, RuntimeError):
    def __init__(self, message, t_last=None):
        super().__init__(message)
        self.t_last = t_last


class EscapeDisk(StepFailure):
    pass
