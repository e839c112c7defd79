"""Exception hierarchy shared by all mploc modules."""


class MplocError(Exception):
    """Base class for all library errors."""


class SizeBudgetExceeded(MplocError):
    """A requested cube would exceed the configured maximum matrix dimension."""


class BudgetExceeded(SizeBudgetExceeded):
    """A probe needs a matrix larger than the configured budget."""


class NoDecomposition(MplocError):
    pass


class ScaleTooSmall(MplocError):
    pass


class WindowTooSmall(MplocError):
    pass


class UnsupportedDistribution(MplocError):
    pass


class ConvergenceFailure(MplocError):
    pass


class SingularEnergy(MplocError):
    """The energy lies (numerically) on the spectrum, so no Green's function exists."""


class NotWeaklySeparable(MplocError):
    pass


class NotSeparable(MplocError):
    pass


class ScheduleViolation(MplocError):
    """A schedule does not satisfy the constraints an operation requires."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class DivergentTail(MplocError):
    pass


class ZeroVector(MplocError):
    pass


class ZeroAtOrigin(MplocError):
    pass


class InsufficientShells(MplocError):
    pass


class CubeNotInterior(MplocError):
    pass


class ConfigError(MplocError):
    pass
