"""Dense reference operators for validating the FFT implementations.

Builds explicit matrices for H and G by summing the identical kernel
samples the FFT path uses (same lateral offsets, same quadrature weight,
same singular-sample policy), so agreement is limited only by FFT
round-off. Deliberately quadratic in the voxel count; grids are capped at
4096 voxels and anything larger raises GridTooLarge rather than silently
thrashing.
"""

import numpy as np

from .errors import DimensionMismatch, GridTooLarge
from .grid import PhysicalGrid
from .propagation import G_MODES, singular_sample_value

MAX_DENSE_VOXELS = 4096


class DenseOperators:
    """Explicit matrices H (n_pix x n_vox) and G (n_vox x n_vox)."""

    def __init__(self, grid: PhysicalGrid, H: np.ndarray, G_full: np.ndarray,
                 G_forward: np.ndarray, singular_policy: str):
        self.grid = grid
        self.H = H
        self.G_full = G_full
        self.G_forward = G_forward
        self.G_backward = G_full - G_forward
        self.singular_policy = singular_policy

    def G(self, mode: str = "full") -> np.ndarray:
        if mode == "full":
            return self.G_full
        if mode == "forward_only":
            return self.G_forward
        if mode == "backward_only":
            return self.G_backward
        raise ValueError(f"unknown G mode {mode!r}; expected one of {G_MODES}")


def _voxel_coords(grid: PhysicalGrid):
    """Flattened (z_index, y, x) coordinates in C order, matching ravel()."""
    m = np.arange(grid.nz)
    y = np.arange(grid.ny) * grid.dy
    x = np.arange(grid.nx) * grid.dx
    M, Y, X = np.meshgrid(m, y, x, indexing="ij")
    return M.ravel(), Y.ravel(), X.ravel()


def build_dense(grid: PhysicalGrid, singular_policy: str = "exclude") -> DenseOperators:
    """Assemble dense H and G with the same samples as the FFT kernels."""
    n_vox = grid.nx * grid.ny * grid.nz
    if n_vox > MAX_DENSE_VOXELS:
        raise GridTooLarge(
            f"{n_vox} voxels exceeds the dense-oracle cap of {MAX_DENSE_VOXELS}")
    sample = singular_sample_value(grid, singular_policy)
    w = grid.voxel_volume
    k = grid.k

    m_idx, yy, xx = _voxel_coords(grid)
    dx2 = (xx[:, None] - xx[None, :]) ** 2
    dy2 = (yy[:, None] - yy[None, :]) ** 2

    # volume -> volume
    dm = m_idx[:, None] - m_idx[None, :]
    r = np.sqrt(dx2 + dy2 + (dm * grid.slice_spacing) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        G_full = w * np.exp(1j * k * r) / r
    G_full[r == 0.0] = w * sample
    if singular_policy == "exclude":
        G_full[dm == 0] = 0.0
    G_forward = np.where(dm < 0, G_full, 0.0)   # output slice below source slice

    # volume -> hologram plane (z = 0, same lateral raster)
    zsrc = grid.slice_heights[m_idx]
    yp = np.repeat(np.arange(grid.ny) * grid.dy, grid.nx)
    xp = np.tile(np.arange(grid.nx) * grid.dx, grid.ny)
    rh = np.sqrt((xp[:, None] - xx[None, :]) ** 2 +
                 (yp[:, None] - yy[None, :]) ** 2 + zsrc[None, :] ** 2)
    H = w * np.exp(1j * k * rh) / rh   # z0 > 0 keeps rh away from zero

    return DenseOperators(grid, H, G_full, G_forward, singular_policy)


def dense_forward(ops: DenseOperators, f: np.ndarray, u_in: np.ndarray,
                  order_K: int, mode: str = "full"):
    """Born recursion and hologram-plane field by explicit matmul.

    Returns (u_K flattened, E flattened over detector pixels).
    """
    grid = ops.grid
    if f.shape != grid.shape:
        raise DimensionMismatch(f"f shape {f.shape} != grid {grid.shape}")
    fv = f.ravel().astype(np.float64)
    uin = u_in.ravel().astype(np.complex128)
    G = ops.G(mode)
    u = np.zeros_like(uin)
    for _ in range(order_K):
        u = uin + G @ (u * fv)
    E = ops.H @ (u * fv)
    return u, E


def dense_cost(ops: DenseOperators, f: np.ndarray, u_in: np.ndarray,
               measured_re: np.ndarray, order_K: int, mode: str = "full") -> float:
    """0.5 * || Re{E(f)} - measured ||^2 on the detector raster."""
    _, E = dense_forward(ops, f, u_in, order_K, mode)
    resid = np.real(E) - measured_re.ravel()
    return 0.5 * float(resid @ resid)


def fd_gradient(ops: DenseOperators, f: np.ndarray, u_in: np.ndarray,
                measured_re: np.ndarray, order_K: int, coords,
                mode: str = "full", rel_step: float = 1e-6) -> np.ndarray:
    """Central finite differences of the data cost at selected voxels.

    ``coords`` is a sequence of flat voxel indices; the step scales with the
    local magnitude, h = rel_step * (1 + |f_i|).
    """
    out = np.empty(len(coords))
    base = f.ravel().copy()
    for j, i in enumerate(coords):
        h = rel_step * (1.0 + abs(base[i]))
        fp = base.copy()
        fp[i] += h
        fm = base.copy()
        fm[i] -= h
        cp = dense_cost(ops, fp.reshape(ops.grid.shape), u_in, measured_re, order_K, mode)
        cm = dense_cost(ops, fm.reshape(ops.grid.shape), u_in, measured_re, order_K, mode)
        out[j] = (cp - cm) / (2.0 * h)
    return out
