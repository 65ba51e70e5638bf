"""Exception types shared across the package."""


class StereoMatchError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(StereoMatchError, ValueError):
    """An array has the wrong rank or an incompatible extent on some axis."""


class ConfigError(StereoMatchError, ValueError):
    """A configuration value is missing, unknown, or out of range."""


class DataFormatError(StereoMatchError, ValueError):
    """A file on disk does not match the expected binary format."""


class GraphError(StereoMatchError, RuntimeError):
    """The autodiff graph was used in an unsupported way."""
