"""Exception hierarchy shared by all modules."""


class SloshError(Exception):
    """Base class for every error raised by the package."""


class InvalidSpec(SloshError, ValueError):
    pass


class DegenerateMesh(SloshError):
    pass


class DegenerateElement(SloshError):
    pass


class DimensionMismatch(SloshError, ValueError):
    pass


class SolverFailure(SloshError):
    pass


class SingularOperator(SolverFailure):
    pass


class IncompatibleData(SloshError, ValueError):
    pass


class DomainError(SloshError, ValueError):
    pass


class ConvergenceFailure(SloshError):
    pass


class NotSimple(SloshError):
    pass


class ModeTrackingFailure(SloshError):
    pass


class IdentityViolation(SloshError):
    """A checked identity failed; ``residual`` holds the worst relative residual."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
