"""Exception classes shared across the package."""


class LensingError(Exception):
    pass


class ObstructionError(LensingError, ValueError):
    """A ray hit (or came numerically too close to) a point mass.

    ``plane`` and ``mass`` are 1-based indices of the offending mass.
    """

    def __init__(self, plane, mass, distance=None):
        self.plane = plane
        self.mass = mass
        self.distance = distance
        msg = f"ray obstructed by mass {mass} in plane {plane}"
        if distance is not None:
            msg += f" (distance {distance:.3e})"
        super().__init__(msg)


class UnsupportedError(LensingError):
    pass


class StepError(LensingError):
    pass


class ZeroPolynomialError(LensingError, ArithmeticError):
    pass


class DegreeOverflowError(LensingError, OverflowError):
    pass


class DegenerateEnsembleError(LensingError):
    pass


class DegreeMismatchError(LensingError):
    def __init__(self, found, expected, label="P"):
        self.found = found
        self.expected = expected
        super().__init__(f"degree({label}) = {found}, expected {expected}")


class InternalMismatchError(LensingError):
    pass


class CapExceededError(LensingError):
    pass


class IllConditionedError(LensingError):
    pass


class NonGenericError(LensingError):
    """Raised when a source or an image is (numerically) degenerate."""

    def __init__(self, msg, margins=None):
        self.margins = dict(margins or {})
        super().__init__(msg)


class MethodDisagreementError(LensingError):
    def __init__(self, msg, report=None):
        self.report = report
        super().__init__(msg)


class BoundViolationError(LensingError):
    def __init__(self, msg, report=None):
        self.report = report
        super().__init__(msg)


class EmptyResultError(LensingError):
    pass


class VanishingResultantError(IllConditionedError):
    """The two polynomials share a factor, so their resultant is zero."""
