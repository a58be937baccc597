"""Canned experiment scenes at desk scale.

Three families, all on 172.5 nm pixels with 630 nm illumination in water:

* ``occlusion_scene``: a 256x256x3 stack of eight high-contrast disks
  arranged in axial stacks, the regime where single-scattering inversion
  visibly underestimates contrast.
* ``density_scene``: a 128x128x20 suspension of randomly placed disks at a
  requested geometric cross-section density and contrast, used for the
  reconstruction-quality and depth-recall sweeps.
* ``backscatter_case``: a 128x128x16 suspension in four contrast/density
  combinations ordered by how much energy the backward transfers carry.

The CLI exposes these under fixed preset names; the scene content is
deterministic given the seed.
"""

import numpy as np

from .grid import PhysicalGrid, contrast_from_index, make_grid
from .phantom_analysis import (
    ParticleSet,
    PhantomSpec,
    generate_phantom,
    particles_for_density,
    rasterize_particles,
)

PIXEL = 172.5e-9
WAVELENGTH = 630e-9
MEDIUM_INDEX = 1.33
APERTURE = 0.4
DISK_RADIUS = 0.5e-6

STRONG_INDEX = 1.52   # delta n = 0.19
WEAK_INDEX = 1.34     # delta n = 0.01


def _grid(nx, ny, nz, slice_spacing, z0) -> PhysicalGrid:
    return make_grid(nx=nx, ny=ny, nz=nz, dx=PIXEL, dy=PIXEL, dz_voxel=PIXEL,
                     slice_spacing=slice_spacing, z0=z0,
                     lambda_vacuum=WAVELENGTH, n_medium=MEDIUM_INDEX,
                     na=APERTURE)


def contrast_of(delta_n: float, grid: PhysicalGrid) -> float:
    return contrast_from_index(MEDIUM_INDEX + delta_n, grid)


# --- occluding-stack scene -----------------------------------------------------

def occlusion_grid() -> PhysicalGrid:
    """256 x 256 pixels (44.2 um) by three slices spanning 10 um, detector
    one voxel pitch in front of the nearest slice."""
    return _grid(256, 256, 3, slice_spacing=5e-6, z0=PIXEL)


def occlusion_scene(delta_n: float = 0.19, grid: PhysicalGrid | None = None):
    """Eight 1 um disks in axial stacks inside the central few microns.

    Stack layout (lateral site -> occupied slices): one full three-slice
    stack, two two-slice stacks offset to opposite corners, and one free
    disk, so the scene mixes strong occlusion with an unoccluded reference.
    Fully deterministic.
    """
    if grid is None:
        grid = occlusion_grid()
    if grid.nz < 3:
        raise ValueError("the occluding layout spans three slices; "
                         f"grid has nz={grid.nz}")
    if min(grid.nx, grid.ny) < 32:
        raise ValueError("grid too small laterally for the four-site layout")
    c = contrast_of(delta_n, grid)
    # disk centers sit exactly on pixel centers so the rasterized peak
    # equals the analytic chord maximum
    cx = (grid.nx // 2) * grid.dx
    cy = (grid.ny // 2) * grid.dy
    off = 9 * PIXEL
    sites = {
        "stack3": (cx - off, cy - off, (0, 1, 2)),
        "front2": (cx + off, cy - off, (0, 1)),
        "back2": (cx - off, cy + off, (1, 2)),
        "single": (cx + off, cy + off, (0,)),
    }
    xs, ys, zs = [], [], []
    for x, y, slices in sites.values():
        for m in slices:
            xs.append(x)
            ys.append(y)
            zs.append(grid.slice_z(m))
    particles = ParticleSet(x=np.array(xs), y=np.array(ys), z=np.array(zs),
                            radius=np.full(len(xs), DISK_RADIUS),
                            contrast=np.full(len(xs), c))
    return grid, rasterize_particles(grid, particles), particles


# --- random-suspension scenes --------------------------------------------------

def density_grid(nz: int = 20) -> PhysicalGrid:
    """128 x 128 pixels (22.1 um) by ``nz`` slices every 5 um, front slice
    5 um from the detector."""
    return _grid(128, 128, nz, slice_spacing=5e-6, z0=5e-6)


def density_scene(delta_n: float, density: float, seed: int,
                  nz: int = 20):
    """Random suspension at geometric cross-section ``density``.

    The disk count follows the density inversion for this grid; placement
    is deterministic in ``seed``.
    """
    grid = density_grid(nz)
    n = particles_for_density(density, grid, DISK_RADIUS)
    spec = PhantomSpec(n_particles=n, radius=DISK_RADIUS,
                       contrast=contrast_of(delta_n, grid))
    volume, particles = generate_phantom(grid, spec, np.random.default_rng(seed))
    return grid, volume, particles


def backscatter_grid() -> PhysicalGrid:
    """128 x 128 pixels by 16 slices every 10 um (150 um deep stack)."""
    return _grid(128, 128, 16, slice_spacing=10e-6, z0=10e-6)


BACKSCATTER_CASES = {
    "i": (0.01, 0.02),
    "ii": (0.01, 0.2),
    "iii": (0.19, 0.02),
    "iv": (0.19, 0.2),
}


def backscatter_case(case: str, seed: int = 11):
    """One of four contrast/density combinations on the deep stack.

    Cases sharing a density reuse the same particle layout (only the
    contrast differs), so the case ordering isolates the physics from the
    placement randomness.
    """
    if case not in BACKSCATTER_CASES:
        raise ValueError(f"unknown case {case!r}; expected one of "
                         f"{sorted(BACKSCATTER_CASES)}")
    delta_n, density = BACKSCATTER_CASES[case]
    grid = backscatter_grid()
    n = particles_for_density(density, grid, DISK_RADIUS)
    spec = PhantomSpec(n_particles=n, radius=DISK_RADIUS,
                       contrast=contrast_of(delta_n, grid))
    volume, particles = generate_phantom(grid, spec, np.random.default_rng(seed))
    return grid, volume, particles
