"""Physical geometry, sampling rules, and the core field/volume containers.

The sample volume is a stack of ``nz`` thin 2D slices, each one voxel thick,
spaced ``slice_spacing`` apart along the optical axis. The hologram plane sits
at z = 0 and slice m sits at z = z0 + m * slice_spacing, so slice 0 is the one
closest to the detector. Illumination is a unit plane wave travelling through
the volume toward the hologram plane; with the outgoing free-space kernel
exp(ik|r|)/|r| used throughout, the matching incident field on a slice at
height z is exp(-ikz), which is 1 (real) on the hologram plane.

Lateral sampling must satisfy the half-wavelength-in-medium rule so that the
high-angle field inside the volume is represented without aliasing.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidNA, NonPositiveDimension, SamplingViolation

_MIN_NA = 1e-6


@dataclass(frozen=True)
class PhysicalGrid:
    """Discretization and optical constants shared by every operator.

    Lengths are in meters. ``dz_voxel`` is the physical thickness of one
    slice (the axial quadrature weight); ``slice_spacing`` is the distance
    between consecutive slices and may be much larger than ``dz_voxel``.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz_voxel: float
    slice_spacing: float
    z0: float
    lambda_vacuum: float
    n_medium: float
    na: float

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            if int(getattr(self, name)) < 1:
                raise NonPositiveDimension(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("dx", "dy", "dz_voxel", "slice_spacing", "z0",
                     "lambda_vacuum", "n_medium"):
            if not getattr(self, name) > 0:
                raise NonPositiveDimension(f"{name} must be positive, got {getattr(self, name)}")
        if not self.na > 0:
            raise InvalidNA(f"na must be positive, got {self.na}")
        if self.na > self.n_medium:
            raise InvalidNA(
                f"na {self.na} exceeds the medium index {self.n_medium}")
        half = self.lambda_medium / 2.0
        if self.dx > half or self.dy > half:
            raise SamplingViolation(
                f"lateral pitch ({self.dx:.4g}, {self.dy:.4g}) m exceeds "
                f"lambda_medium/2 = {half:.4g} m")

    @property
    def lambda_medium(self) -> float:
        return self.lambda_vacuum / self.n_medium

    @property
    def k(self) -> float:
        """Wavenumber in the medium, 2*pi*n_medium/lambda_vacuum."""
        return 2.0 * np.pi * self.n_medium / self.lambda_vacuum

    @property
    def shape(self) -> tuple[int, int, int]:
        """Volume array shape, (nz, ny, nx)."""
        return (self.nz, self.ny, self.nx)

    @property
    def voxel_volume(self) -> float:
        return self.dx * self.dy * self.dz_voxel

    def slice_z(self, m) -> np.ndarray | float:
        """Height of slice m above the hologram plane."""
        return self.z0 + np.asarray(m) * self.slice_spacing

    @cached_property
    def slice_heights(self) -> np.ndarray:
        return self.z0 + self.slice_spacing * np.arange(self.nz)


def make_grid(nx, ny, nz, dx, dy, dz_voxel, slice_spacing, z0,
              lambda_vacuum, n_medium, na) -> PhysicalGrid:
    """Validate and build a :class:`PhysicalGrid`.

    Raises :class:`SamplingViolation` when dx or dy exceeds
    lambda_medium/2 and :class:`NonPositiveDimension` on degenerate sizes.
    """
    return PhysicalGrid(nx=int(nx), ny=int(ny), nz=int(nz), dx=dx, dy=dy,
                        dz_voxel=dz_voxel, slice_spacing=slice_spacing, z0=z0,
                        lambda_vacuum=lambda_vacuum, n_medium=n_medium, na=na)


def axial_resolution(grid: PhysicalGrid, na: float | None = None) -> float:
    """Depth-of-field estimate lambda_medium / (1 - sqrt(1 - NA^2)).

    ``na`` overrides the grid's aperture when given (for what-if sizing).
    """
    if na is None:
        na = grid.na
    if na < _MIN_NA or na > 1.0:
        raise InvalidNA(f"axial resolution needs {_MIN_NA} <= NA <= 1, got {na}")
    return grid.lambda_medium / (1.0 - np.sqrt(1.0 - na * na))


def contrast_from_index(n_particle: float, grid: PhysicalGrid) -> float:
    """Scattering-potential value of a material of index ``n_particle``.

    Uses the k^2/(4 pi) convention: f = (k^2/4pi) (n^2 - n_m^2) / n_m^2 with
    k the wavenumber in the medium, so f pairs with the kernel exp(ik|r|)/|r|
    and per-voxel quadrature dx*dy*dz_voxel (folded into the propagation
    kernels, not into f). Units: 1/m^2.
    """
    if n_particle < grid.n_medium:
        raise ValueError(f"n_particle {n_particle} below medium index {grid.n_medium}")
    nm2 = grid.n_medium ** 2
    return grid.k ** 2 / (4.0 * np.pi) * (n_particle ** 2 - nm2) / nm2


@dataclass
class ObjectVolume:
    """Real, nonnegative scattering-potential voxels on a grid."""

    grid: PhysicalGrid
    values: np.ndarray  # (nz, ny, nx) float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("object volume contains non-finite values")

    @classmethod
    def zeros(cls, grid: PhysicalGrid) -> "ObjectVolume":
        return cls(grid, np.zeros(grid.shape))


@dataclass
class InternalField:
    """Complex field on every object slice.

    ``order_k`` records the Born order the field represents; ``None`` marks
    the incident field, which is not itself a member of the recursion. Order
    zero is by definition the all-zero field.
    """

    grid: PhysicalGrid
    values: np.ndarray  # (nz, ny, nx) complex128
    order_k: int | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")
        if self.order_k == 0 and np.any(self.values != 0):
            raise ValueError("order-0 field must be identically zero")


@dataclass
class ScatteredField2D:
    """Field on the hologram plane; complex before, real after extraction."""

    values: np.ndarray  # (ny, nx)
    dx: float
    dy: float


@dataclass
class Hologram2D:
    """Recorded intensity on the hologram plane (nonnegative)."""

    values: np.ndarray  # (ny, nx) float64
    dx: float
    dy: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0):
            raise ValueError("hologram intensity must be nonnegative")


def incident_plane_wave(grid: PhysicalGrid) -> InternalField:
    """Unit plane wave sampled on all slices, phase-referenced to z = 0.

    The wave propagates through the volume toward the hologram plane, where
    it is exactly 1 + 0i; a slice at height z carries exp(-i k z) so that
    propagation toward the detector with the exp(ik|r|)/|r| kernel is
    phase-matched with the illumination.
    """
    phase = np.exp(-1j * grid.k * grid.slice_heights)
    values = np.broadcast_to(phase[:, None, None], grid.shape).copy()
    return InternalField(grid, values, order_k=None)


def incident_at_hologram(grid: PhysicalGrid) -> float:
    """Incident-field value on the hologram plane (real by construction)."""
    return 1.0
