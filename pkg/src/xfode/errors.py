"""Exception types raised by the xfode package."""


class XfodeError(Exception):
    """Base class for all xfode errors."""


class MissingFileError(XfodeError):
    pass


class HeaderMismatchError(XfodeError):
    pass


class NonFiniteValueError(XfodeError):
    pass


class DimensionMismatchError(XfodeError):
    pass


class ShapeMismatchError(DimensionMismatchError):
    pass


class InsufficientSamplesError(XfodeError):
    pass


class NonPositiveInputError(XfodeError, ValueError):
    pass


class NonFiniteParameterError(XfodeError, ValueError):
    pass


class NumericalDivergenceError(XfodeError):
    """A rollout produced a non-finite or unreasonably large state."""

    def __init__(self, step, magnitude, message=None):
        self.step = step
        self.magnitude = magnitude
        super().__init__(
            message
            or f"state diverged at step {step} (max |component| = {magnitude:.3e})"
        )


class DivergedRunError(XfodeError):
    """Every mini-batch of a training epoch diverged."""


class AllSeedsDivergedError(XfodeError):
    """No seed of a benchmark produced a usable model."""
