class HoloflowError(Exception):
    """Base class for every error raised by the verification engine."""


class InfeasibleSchemeError(HoloflowError, ValueError):
    pass


class DiagonalSingularityError(HoloflowError, ValueError):
    pass


class DegenerateSampleError(HoloflowError, ValueError):
    pass


class ValenceMismatchError(HoloflowError, ValueError):
    pass


class TruncationOverflowError(HoloflowError):
    pass


class NonConvergenceError(HoloflowError):
    """Adaptive integration stopped at its order cap without meeting tolerance.

    The best estimate and its error are kept so callers can still report them.
    """

    def __init__(self, message: str, estimate: complex | None = None, error: float | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
