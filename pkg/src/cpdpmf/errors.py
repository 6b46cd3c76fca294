"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Raised when factor matrices or tensors have inconsistent shapes."""


class OracleCapError(ValueError):
    """Raised when a dense rendering would exceed the configured entry cap."""


class DivergenceError(RuntimeError):
    """A filter lost all probability mass or its covariance broke down."""


class OutOfMapError(ValueError):
    """A terrain query fell outside the raster hull or on a NODATA cell."""


class MapExitError(RuntimeError):
    """A simulated trajectory left the terrain raster."""

    def __init__(self, step, position):
        self.step = step
        self.position = tuple(position)
        super().__init__(f"trajectory left the map at step {step}, position {self.position}")


class ConfigError(ValueError):
    """Malformed or inconsistent benchmark configuration."""
