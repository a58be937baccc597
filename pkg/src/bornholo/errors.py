"""Exception types shared across the package."""


class BornHoloError(Exception):
    """Base class for all errors raised by this package."""


class SamplingViolation(BornHoloError):
    """Lateral pitch exceeds the half-wavelength-in-medium limit."""


class NonPositiveDimension(BornHoloError):
    """A voxel count or physical length is zero or negative."""


class InvalidNA(BornHoloError):
    """Numerical aperture outside the usable range."""


class DimensionMismatch(BornHoloError):
    """Array shape does not match the grid an operator was built for."""


class ZeroIncidentField(BornHoloError):
    """Background removal requires a nonzero incident field."""


class KernelAllocationError(BornHoloError):
    """Transfer-function storage could not be allocated.

    Carries the requested size so callers can report it.
    """

    def __init__(self, requested_bytes: int, cause: BaseException | None = None):
        self.requested_bytes = requested_bytes
        super().__init__(f"failed to allocate {requested_bytes} bytes of kernel storage")
        self.__cause__ = cause


class GridTooLarge(BornHoloError):
    """Dense reference operators are restricted to tiny grids."""


class PackingFailure(BornHoloError):
    """Could not place the requested particles under the separation rule."""


class DegenerateTruth(BornHoloError):
    """Reference volume is identically zero, SNR undefined."""


class ZeroMeanHologram(BornHoloError):
    """Contrast ratio requires a hologram with positive mean."""


class ConfigError(BornHoloError):
    """Run configuration failed validation; message carries the field path."""
