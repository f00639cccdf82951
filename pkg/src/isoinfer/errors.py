"""Exception types raised across the package."""


class IsoInferError(Exception):
    """Base class for all package errors."""


class InvalidInput(IsoInferError, ValueError):
    pass


class OutOfDomain(IsoInferError, ValueError):
    pass


class InvalidDrift(IsoInferError, ValueError):
    pass


class SampleTooSmall(IsoInferError, ValueError):
    pass


class DegenerateSubsampling(IsoInferError, RuntimeError):
    pass


class WindowError(IsoInferError, RuntimeError):
    """Raised when a limit-law draw keeps touching the simulation window edge."""

    def __init__(self, draw_index: int, half_width: float):
        self.draw_index = draw_index
        self.half_width = half_width
        super().__init__(
            f"draw {draw_index}: hull segment at 0 still reaches the outer "
            f"quarter of [-{half_width:g}, {half_width:g}] after all doublings"
        )
