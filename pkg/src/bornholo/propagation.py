"""FFT-based propagation operators between slices and to the hologram plane.

The free-space kernel h(r) = exp(ik|r|)/|r| is sampled directly in the
spatial domain on a 2x zero-padded lateral grid (direct method) and
transformed once per axial offset; every operator application is then a
set of frequency-domain products. Padding to twice the lateral size makes
the circular FFT product equal to the linear convolution over the object
support, so the operators agree exactly with dense spatial summation.

Two operator families share the kernel set:

* H maps a source volume to the 2D field on the hologram plane (one
  transfer function per slice height z0 + m*slice_spacing).
* G maps a source volume onto the volume itself (one transfer function per
  inter-slice offset; h depends on |r|, so offsets +d and -d share a plane).

``mode`` selects which inter-slice transfers G applies. With the hologram
at z = 0 below the stack, "forward" transfers move energy toward the
detector, i.e. from slice n to slice m with m < n. ``backward_only`` is the
exact complement of ``forward_only`` (it keeps the same-slice term, which is
zero under the default singular-sample policy), so full = forward + backward
holds for every policy.

The same-slice kernel contains the r = 0 singularity of h. Policies:

* ``"exclude"`` (default): drop the whole same-slice plane. The coupling of
  a voxel to its own slice neighbours at high contrast otherwise exceeds
  unit gain and the Born recursion diverges; see the phantom convergence
  tests.
* ``"zero_sample"``: keep intra-slice coupling between distinct voxels,
  zero only the singular sample.
* ``"equivalent_sphere"``: replace the singular sample with
  exp(ik*d_eff)/d_eff where d_eff is the radius of the sphere with one
  voxel's volume.
"""

from dataclasses import dataclass

import numpy as np
import scipy.fft as _sfft

from .errors import DimensionMismatch, KernelAllocationError
from .grid import PhysicalGrid

SINGULAR_POLICIES = ("exclude", "zero_sample", "equivalent_sphere")

G_MODES = ("full", "forward_only", "backward_only")

_fft_workers = 1


def set_fft_workers(n: int) -> None:
    """Worker count for batched FFTs (1 = fully serial, the default)."""
    global _fft_workers
    if n < 1:
        raise ValueError(f"worker count must be >= 1, got {n}")
    _fft_workers = int(n)


def get_fft_workers() -> int:
    return _fft_workers


def fft2(a: np.ndarray) -> np.ndarray:
    return _sfft.fft2(a, workers=_fft_workers)


def ifft2(a: np.ndarray) -> np.ndarray:
    return _sfft.ifft2(a, workers=_fft_workers)


@dataclass
class PropagationKernels:
    """Precomputed frequency-domain transfer functions for one grid.

    ``tf_volume[d]`` propagates over an axial offset of d slice spacings
    (d = |m - n|, shared by both signs); ``tf_holo[m]`` propagates slice m
    to the hologram plane. Quadrature dx*dy*dz_voxel is folded in.
    """

    grid: PhysicalGrid
    pad_ny: int
    pad_nx: int
    tf_volume: np.ndarray   # (nz, pad_ny, pad_nx) complex
    tf_holo: np.ndarray     # (nz, pad_ny, pad_nx) complex
    singular_policy: str
    singular_sample: complex  # spatial-domain value used at r = 0 (pre-quadrature)

    @property
    def dtype(self):
        return self.tf_volume.dtype

    def nbytes(self) -> int:
        return self.tf_volume.nbytes + self.tf_holo.nbytes


def _lateral_offsets(pad_n: int, pitch: float) -> np.ndarray:
    """Signed sample offsets in FFT order (index 0 <-> zero offset)."""
    ix = np.arange(pad_n)
    ix[ix >= pad_n // 2 + pad_n % 2] -= pad_n
    return ix * pitch


def _kernel_plane(grid: PhysicalGrid, pad_ny: int, pad_nx: int, dz: float,
                  policy: str, singular_sample: complex) -> np.ndarray:
    """Sample w * exp(ik r)/r for one axial offset on the padded grid."""
    x = _lateral_offsets(pad_nx, grid.dx)[None, :]
    y = _lateral_offsets(pad_ny, grid.dy)[:, None]
    r = np.sqrt(x * x + y * y + dz * dz)
    w = grid.voxel_volume
    if dz == 0.0:
        if policy == "exclude":
            return np.zeros((pad_ny, pad_nx), dtype=np.complex128)
        with np.errstate(divide="ignore", invalid="ignore"):
            plane = w * np.exp(1j * grid.k * r) / r
        plane[0, 0] = w * singular_sample
        return plane
    return w * np.exp(1j * grid.k * r) / r


def singular_sample_value(grid: PhysicalGrid, policy: str) -> complex:
    """Spatial-domain replacement for h at r = 0 under the given policy."""
    if policy in ("exclude", "zero_sample"):
        return 0.0 + 0.0j
    if policy == "equivalent_sphere":
        d_eff = (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0) * grid.voxel_volume ** (1.0 / 3.0)
        return np.exp(1j * grid.k * d_eff) / d_eff
    raise ValueError(f"unknown singular-sample policy {policy!r}; "
                     f"expected one of {SINGULAR_POLICIES}")


def build_kernels(grid: PhysicalGrid, singular_policy: str = "exclude",
                  dtype=np.complex128) -> PropagationKernels:
    """Precompute all transfer functions needed by H, G and their adjoints.

    One padded plane per inter-slice offset 0..nz-1 (signs are shared) plus
    one per slice-to-hologram height. Raises
    :class:`~bornholo.errors.KernelAllocationError` carrying the requested
    byte count when the storage cannot be allocated.
    """
    sample = singular_sample_value(grid, singular_policy)
    pad_ny, pad_nx = 2 * grid.ny, 2 * grid.nx
    itemsize = np.dtype(dtype).itemsize
    requested = 2 * grid.nz * pad_ny * pad_nx * itemsize
    try:
        tf_volume = np.empty((grid.nz, pad_ny, pad_nx), dtype=dtype)
        tf_holo = np.empty((grid.nz, pad_ny, pad_nx), dtype=dtype)
    except MemoryError as exc:
        raise KernelAllocationError(requested, exc) from exc

    for d in range(grid.nz):
        plane = _kernel_plane(grid, pad_ny, pad_nx, d * grid.slice_spacing,
                              singular_policy, sample)
        tf_volume[d] = fft2(plane).astype(dtype)
    for m in range(grid.nz):
        plane = _kernel_plane(grid, pad_ny, pad_nx, float(grid.slice_z(m)),
                              singular_policy, sample)
        tf_holo[m] = fft2(plane).astype(dtype)

    return PropagationKernels(grid=grid, pad_ny=pad_ny, pad_nx=pad_nx,
                              tf_volume=tf_volume, tf_holo=tf_holo,
                              singular_policy=singular_policy,
                              singular_sample=sample)


def _check_volume(kernels: PropagationKernels, source: np.ndarray) -> np.ndarray:
    source = np.asarray(source)
    if source.shape != kernels.grid.shape:
        raise DimensionMismatch(
            f"source shape {source.shape} != grid {kernels.grid.shape}")
    return source


def _pad_fft(kernels: PropagationKernels, arr: np.ndarray) -> np.ndarray:
    ny, nx = kernels.grid.ny, kernels.grid.nx
    padded = np.zeros(arr.shape[:-2] + (kernels.pad_ny, kernels.pad_nx),
                      dtype=np.result_type(arr.dtype, kernels.dtype))
    padded[..., :ny, :nx] = arr
    return fft2(padded)


def _ifft_crop(kernels: PropagationKernels, spec: np.ndarray) -> np.ndarray:
    ny, nx = kernels.grid.ny, kernels.grid.nx
    return ifft2(spec)[..., :ny, :nx]


def apply_H(kernels: PropagationKernels, source: np.ndarray) -> np.ndarray:
    """Propagate a source volume to the hologram plane.

    Returns the complex 2D field sum_m ifft(tf_holo[m] * fft(source[m])).
    """
    source = _check_volume(kernels, source)
    spec = _pad_fft(kernels, source)
    field_spec = np.einsum("myx,myx->yx", kernels.tf_holo, spec)
    return _ifft_crop(kernels, field_spec)


def apply_H_adjoint(kernels: PropagationKernels, field: np.ndarray) -> np.ndarray:
    """Exact adjoint of :func:`apply_H` under the Euclidean inner product."""
    field = np.asarray(field)
    if field.shape != (kernels.grid.ny, kernels.grid.nx):
        raise DimensionMismatch(
            f"field shape {field.shape} != ({kernels.grid.ny}, {kernels.grid.nx})")
    spec = _pad_fft(kernels, field)
    return _ifft_crop(kernels, np.conj(kernels.tf_holo) * spec[None])


def _apply_G_spec(kernels: PropagationKernels, spec: np.ndarray, mode: str,
                  adjoint: bool) -> np.ndarray:
    """Offset-ordered accumulation shared by G and its adjoint.

    For the adjoint the kernel planes are conjugated and the forward /
    backward index masks swap roles (the mask transposes).
    """
    if mode not in G_MODES:
        raise ValueError(f"unknown G mode {mode!r}; expected one of {G_MODES}")
    nz = kernels.grid.nz
    out = np.zeros_like(spec)
    tf = np.conj(kernels.tf_volume) if adjoint else kernels.tf_volume

    toward_detector = mode in ("full", "forward_only")
    away_from_detector = mode in ("full", "backward_only")
    include_diag = mode in ("full", "backward_only")
    if adjoint:
        toward_detector, away_from_detector = away_from_detector, toward_detector

    if include_diag:
        out += tf[0] * spec
    for d in range(1, nz):
        if toward_detector:      # out slice m receives from n = m + d
            out[:nz - d] += tf[d] * spec[d:]
        if away_from_detector:   # out slice m receives from n = m - d
            out[d:] += tf[d] * spec[:nz - d]
    return out


def apply_G(kernels: PropagationKernels, source: np.ndarray,
            mode: str = "full") -> np.ndarray:
    """Propagate every slice of a source volume to every other slice.

    ``mode="forward_only"`` keeps only transfers toward the hologram plane
    (output slice index below the source index); ``"backward_only"`` is the
    complement, so ``full = forward_only + backward_only`` exactly.
    """
    source = _check_volume(kernels, source)
    spec = _pad_fft(kernels, source)
    return _ifft_crop(kernels, _apply_G_spec(kernels, spec, mode, adjoint=False))


def apply_G_adjoint(kernels: PropagationKernels, source: np.ndarray,
                    mode: str = "full") -> np.ndarray:
    """Exact adjoint of :func:`apply_G` for the same ``mode``."""
    source = _check_volume(kernels, source)
    spec = _pad_fft(kernels, source)
    return _ifft_crop(kernels, _apply_G_spec(kernels, spec, mode, adjoint=True))


def na_lowpass(field: np.ndarray, grid: PhysicalGrid) -> np.ndarray:
    """Optional hologram-plane filter to the system aperture (off by default).

    Zeroes lateral frequencies above NA/lambda_vacuum. Not applied anywhere
    automatically; the discrete model keeps whatever the sampled kernel
    carries.
    """
    fy = np.fft.fftfreq(field.shape[-2], d=grid.dy)[:, None]
    fx = np.fft.fftfreq(field.shape[-1], d=grid.dx)[None, :]
    mask = (fx * fx + fy * fy) <= (grid.na / grid.lambda_vacuum) ** 2
    return ifft2(fft2(field) * mask)
