"""Exception types shared across the package."""


class IndefLQError(Exception):
    """Base class for all errors raised by this package."""


class ConstraintViolation(IndefLQError):
    """The effective control weight lost uniform positivity.

    Carries the time at which the violation was detected and the offending
    minimal eigenvalue (margin).
    """

    def __init__(self, time, margin, message=None):
        self.time = float(time)
        self.margin = float(margin)
        super().__init__(
            message
            or f"effective control weight not positive at t={self.time:.6g} "
            f"(min eigenvalue {self.margin:.3e})"
        )


class GridMismatch(IndefLQError):
    """Two paths that must share a sample grid do not."""


class NumericalOverflow(IndefLQError):
    """A simulated state left the representable range (explosive closed loop)."""


class PreconditionFailed(IndefLQError):
    """A certificate's structural precondition does not hold for the data."""


class PhiNonpositive(IndefLQError):
    """The scalar comparison function crossed zero, so the certificate is void."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(
            message or f"comparison function phi is nonpositive at t={self.time:.6g}"
        )


class StepLimit(IndefLQError):
    """The adaptive integrator exhausted its step budget."""


class SpecError(IndefLQError):
    """A problem-specification file failed to parse or validate."""
