"""Synthetic disk phantoms and the metrics used to judge reconstructions.

Phantoms are thin disks (projected spheres): each occupies a single slice,
with a radial profile equal to the sphere chord length through that slice,
so the column-integrated scattering potential of the underlying sphere is
preserved after the kernel's dz quadrature. Centers are continuous in the
lateral plane and uniform over slices; a same-slice minimum separation is
enforced by rejection sampling.

Metrics: reconstruction SNR against the known truth, hologram fringe
contrast, the scattering-series convergence profile, connected-component
particle detection, and greedy truth-to-detection matching with
depth-resolved recall.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateTruth, PackingFailure, ZeroMeanHologram
from .grid import Hologram2D, PhysicalGrid, incident_plane_wave
from .propagation import PropagationKernels, apply_G

SNR_CAP_DB = 300.0


@dataclass(frozen=True)
class PhantomSpec:
    """Recipe for one random disk phantom."""

    n_particles: int
    radius: float = 0.5e-6
    contrast: float = 1.0
    min_separation: float | None = None  # same-slice, defaults to one diameter
    max_attempts_per_particle: int = 1000

    def __post_init__(self):
        if self.n_particles < 0:
            raise ValueError("n_particles must be >= 0")
        if self.radius <= 0 or self.contrast <= 0:
            raise ValueError("radius and contrast must be positive")

    @property
    def separation(self) -> float:
        return 2.0 * self.radius if self.min_separation is None else self.min_separation


@dataclass
class ParticleSet:
    """Ground-truth particle table in physical units."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    radius: np.ndarray
    contrast: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=np.float64))
                  for a in (self.x, self.y, self.z, self.radius, self.contrast)]
        n = len(arrays[0])
        if any(len(a) != n for a in arrays):
            raise ValueError("particle columns differ in length")
        self.x, self.y, self.z, self.radius, self.contrast = arrays

    def __len__(self) -> int:
        return len(self.x)

    _COLUMNS = ("x_m", "y_m", "z_m", "radius_m", "contrast")

    def to_tsv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(self._COLUMNS)
            for row in zip(self.x, self.y, self.z, self.radius, self.contrast):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_tsv(cls, path) -> "ParticleSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh, delimiter="\t"))
        if not rows or tuple(rows[0]) != cls._COLUMNS:
            raise ValueError(f"expected header {cls._COLUMNS}, got {rows[:1]}")
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
        if data.size == 0:
            raise ValueError("particle table is empty")
        return cls(*data.T)


def particles_for_density(density: float, grid: PhysicalGrid,
                          radius: float = 0.5e-6) -> int:
    """Particle count giving the requested geometric cross-section density.

    density = N * pi r^2 / (nx ny dx dy), rounded to the nearest count.
    """
    area = grid.nx * grid.ny * grid.dx * grid.dy
    return int(round(density * area / (np.pi * radius * radius)))


def geometric_density(particles: ParticleSet, grid: PhysicalGrid) -> float:
    """Summed disk cross-section over the lateral field of view."""
    area = grid.nx * grid.ny * grid.dx * grid.dy
    return float(np.sum(np.pi * particles.radius ** 2) / area)


def generate_phantom(grid: PhysicalGrid, spec: PhantomSpec, rng):
    """Random disk phantom: (volume array, particle table).

    Deterministic for a given generator state. Raises
    :class:`~bornholo.errors.PackingFailure` when the same-slice separation
    cannot be met within the attempt budget.
    """
    rng = np.random.default_rng(rng)
    r = spec.radius
    lo_x, hi_x = r, (grid.nx - 1) * grid.dx - r
    lo_y, hi_y = r, (grid.ny - 1) * grid.dy - r
    if hi_x <= lo_x or hi_y <= lo_y:
        raise PackingFailure(f"disk radius {r} does not fit the lateral field")

    xs, ys, ms = [], [], []
    sep_sq = spec.separation ** 2
    budget = spec.max_attempts_per_particle * spec.n_particles
    attempts = 0
    while len(xs) < spec.n_particles:
        if attempts >= budget:
            raise PackingFailure(
                f"placed {len(xs)}/{spec.n_particles} disks after {attempts} "
                f"attempts (separation {spec.separation:.3g} m)")
        attempts += 1
        x = rng.uniform(lo_x, hi_x)
        y = rng.uniform(lo_y, hi_y)
        m = int(rng.integers(0, grid.nz))
        ok = True
        for xi, yi, mi in zip(xs, ys, ms):
            if mi == m and (x - xi) ** 2 + (y - yi) ** 2 < sep_sq:
                ok = False
                break
        if ok:
            xs.append(x)
            ys.append(y)
            ms.append(m)

    particles = ParticleSet(
        x=np.array(xs), y=np.array(ys),
        z=grid.slice_heights[np.array(ms, dtype=int)],
        radius=np.full(len(xs), r), contrast=np.full(len(xs), spec.contrast))
    return rasterize_particles(grid, particles), particles


def rasterize_particles(grid: PhysicalGrid, particles: ParticleSet) -> np.ndarray:
    """Render a particle table into a contrast volume.

    Each particle becomes a one-slice disk whose voxel values are
    contrast * chord / dz_voxel, the projected-sphere profile; overlapping
    disks add. Particle z snaps to the nearest slice.
    """
    volume = np.zeros(grid.shape)
    for x, y, z, r, c in zip(particles.x, particles.y, particles.z,
                             particles.radius, particles.contrast):
        m = int(round((z - grid.z0) / grid.slice_spacing))
        if not 0 <= m < grid.nz:
            raise ValueError(f"particle height {z} falls outside the slice stack")
        half = int(np.ceil(r / min(grid.dx, grid.dy))) + 1
        ic = int(round(x / grid.dx))
        jc = int(round(y / grid.dy))
        i0, i1 = max(ic - half, 0), min(ic + half + 1, grid.nx)
        j0, j1 = max(jc - half, 0), min(jc + half + 1, grid.ny)
        px = np.arange(i0, i1) * grid.dx - x
        py = np.arange(j0, j1) * grid.dy - y
        rho_sq = px[None, :] ** 2 + py[:, None] ** 2
        chord = 2.0 * np.sqrt(np.maximum(r * r - rho_sq, 0.0))
        volume[m, j0:j1, i0:i1] += c * chord / grid.dz_voxel
    return volume


# --- scalar metrics ----------------------------------------------------------

def snr_db(f_est: np.ndarray, f_true: np.ndarray) -> float:
    """10 log10(||truth||^2 / ||error||^2), capped at 300 dB."""
    if f_est.shape != f_true.shape:
        raise ValueError(f"shape mismatch {f_est.shape} vs {f_true.shape}")
    power = float(np.vdot(f_true, f_true).real)
    if power == 0.0:
        raise DegenerateTruth("SNR is undefined against an all-zero truth")
    err = float(np.vdot(f_est - f_true, f_est - f_true).real)
    if err == 0.0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(power / err), SNR_CAP_DB)


def contrast_ratio(hologram: Hologram2D) -> float:
    """Fringe visibility proxy: std / mean of the recorded intensity."""
    mean = float(hologram.values.mean())
    if abs(mean) < 1e-300:
        raise ZeroMeanHologram("contrast ratio needs a nonzero mean intensity")
    return float(hologram.values.std() / mean)


# --- scattering-series convergence -------------------------------------------

@dataclass
class ConvergenceReport:
    """Norm profile of the scattering series on one volume.

    ``e[k]`` is the norm of the order-k correction relative to the incident
    field (e[0] = 1 by construction); the series behaves when the profile
    decreases.
    """

    e: np.ndarray
    mode: str

    @property
    def is_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.e) < 0.0))

    def ratio(self, k: int) -> float:
        """e[k] / e[k-1], the per-order contraction factor."""
        if k < 1 or k >= len(self.e):
            raise IndexError(f"order {k} outside 1..{len(self.e) - 1}")
        return float(self.e[k] / self.e[k - 1])


def convergence_metric(kernels: PropagationKernels, f: np.ndarray,
                       order_max: int, mode: str = "full",
                       u_in: np.ndarray | None = None) -> ConvergenceReport:
    """Relative norms of successive scattering corrections.

    The order-k correction equals u_{k+1} - u_k, i.e. the k-fold
    application of the coupling operator to the incident field; its decay
    decides whether truncating the recursion at K is trustworthy.
    """
    if order_max < 1:
        raise ValueError("order_max must be >= 1")
    if u_in is None:
        u_in = incident_plane_wave(kernels.grid).values
    norm_in = float(np.linalg.norm(u_in))
    v = u_in
    e = [1.0]
    for _ in range(order_max):
        v = apply_G(kernels, v * f, mode)
        e.append(float(np.linalg.norm(v)) / norm_in)
    return ConvergenceReport(e=np.array(e), mode=mode)


# --- particle detection and matching -----------------------------------------

@dataclass
class DetectedParticles:
    """Connected bright components of a reconstructed volume."""

    count: int
    x: np.ndarray        # intensity-weighted centroids, physical units
    y: np.ndarray
    z: np.ndarray
    voxels: np.ndarray   # component sizes
    mass: np.ndarray     # summed voxel values per component


def count_particles(volume: np.ndarray, grid: PhysicalGrid,
                    threshold: float | None = None,
                    threshold_rel: float = 0.25,
                    min_voxels: int = 2) -> DetectedParticles:
    """Threshold, 26-connected labeling, size filter, weighted centroids.

    ``threshold`` is absolute when given; otherwise ``threshold_rel`` times
    the volume maximum. Components smaller than ``min_voxels`` are noise
    and dropped.
    """
    if volume.shape != grid.shape:
        raise ValueError(f"volume shape {volume.shape} != grid {grid.shape}")
    if threshold is None:
        threshold = threshold_rel * float(volume.max())
    mask = volume > threshold
    labels, n = ndimage.label(mask, structure=np.ones((3, 3, 3), dtype=int))
    if n == 0:
        empty = np.array([])
        return DetectedParticles(0, empty, empty, empty,
                                 np.array([], dtype=int), empty)
    idx = np.arange(1, n + 1)
    sizes = ndimage.sum_labels(np.ones_like(volume), labels, idx).astype(int)
    keep = sizes >= min_voxels
    idx = idx[keep]
    if idx.size == 0:
        empty = np.array([])
        return DetectedParticles(0, empty, empty, empty,
                                 np.array([], dtype=int), empty)
    centroids = np.array(ndimage.center_of_mass(volume, labels, idx))
    mass = ndimage.sum_labels(volume, labels, idx)
    z = grid.z0 + centroids[:, 0] * grid.slice_spacing
    y = centroids[:, 1] * grid.dy
    x = centroids[:, 2] * grid.dx
    return DetectedParticles(len(idx), x, y, z, sizes[keep], mass)


@dataclass
class MatchResult:
    """Greedy assignment of detections to ground-truth particles."""

    n_true: int
    n_detected: int
    n_matched: int
    matched_true: np.ndarray   # bool per truth entry
    matched_det: np.ndarray    # bool per detection
    pairs: list

    @property
    def recall(self) -> float:
        return self.n_matched / self.n_true if self.n_true else 0.0

    @property
    def precision(self) -> float:
        return self.n_matched / self.n_detected if self.n_detected else 0.0


def match_particles(truth: ParticleSet, detected: DetectedParticles,
                    tol_lateral: float, tol_axial: float) -> MatchResult:
    """One-to-one greedy matching inside a tolerance ellipsoid.

    Candidate pairs are ranked by the scaled distance
    sqrt((dx/tol_lat)^2 + (dy/tol_lat)^2 + (dz/tol_ax)^2) and accepted in
    order while below 1, never reusing either side.
    """
    n_t, n_d = len(truth), detected.count
    matched_t = np.zeros(n_t, dtype=bool)
    matched_d = np.zeros(n_d, dtype=bool)
    pairs = []
    if n_t and n_d:
        dx = (truth.x[:, None] - detected.x[None, :]) / tol_lateral
        dy = (truth.y[:, None] - detected.y[None, :]) / tol_lateral
        dz = (truth.z[:, None] - detected.z[None, :]) / tol_axial
        dist = np.sqrt(dx * dx + dy * dy + dz * dz)
        order = np.argsort(dist, axis=None)
        for flat in order:
            i, j = np.unravel_index(flat, dist.shape)
            if dist[i, j] > 1.0:
                break
            if matched_t[i] or matched_d[j]:
                continue
            matched_t[i] = matched_d[j] = True
            pairs.append((int(i), int(j)))
    return MatchResult(n_true=n_t, n_detected=n_d, n_matched=len(pairs),
                       matched_true=matched_t, matched_det=matched_d,
                       pairs=pairs)


def depth_binned_recall(truth: ParticleSet, match: MatchResult,
                        grid: PhysicalGrid, n_bins: int = 4) -> np.ndarray:
    """Recall per axial bin, shallowest first; NaN where a bin is empty.

    Bins split the grid's slice range into equal contiguous runs, so the
    last entry is the quarter of the volume farthest from the detector.
    """
    if len(truth) != match.n_true:
        raise ValueError("match result does not describe this truth set")
    edges = np.linspace(grid.z0 - 0.5 * grid.slice_spacing,
                        grid.slice_z(grid.nz - 1) + 0.5 * grid.slice_spacing,
                        n_bins + 1)
    out = np.full(n_bins, np.nan)
    which = np.clip(np.digitize(truth.z, edges) - 1, 0, n_bins - 1)
    for b in range(n_bins):
        sel = which == b
        if sel.any():
            out[b] = match.matched_true[sel].mean()
    return out
