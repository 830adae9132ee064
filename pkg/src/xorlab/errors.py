"""Exception types raised across the package."""


class XorLabError(Exception):
    """Base class for all errors raised by xorlab."""


class InvalidDimensionError(XorLabError, ValueError):
    pass


class InvalidNoiseError(XorLabError, ValueError):
    pass


class InvalidInitError(XorLabError, ValueError):
    pass


class ShapeError(XorLabError, ValueError):
    pass


class ConfigError(XorLabError, ValueError):
    pass


class DivergenceError(XorLabError, FloatingPointError):
    """Training produced a non-finite loss or weight."""

    def __init__(self, iteration: int, what: str = "loss or weights"):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")


class IncompleteTraceError(XorLabError, ValueError):
    pass


class UnsupportedDimensionError(XorLabError, ValueError):
    pass


class GridAlignmentError(XorLabError, ValueError):
    pass
