"""FFT operators against brute-force dense summation on tiny grids."""

import numpy as np
import pytest

from bornholo import GridTooLarge, make_grid
from bornholo.oracle import MAX_DENSE_VOXELS, build_dense, dense_forward
from bornholo.propagation import SINGULAR_POLICIES, apply_G, apply_H, build_kernels


def tiny_grid(nx=8, ny=8, nz=3, **over):
    kw = dict(nx=nx, ny=ny, nz=nz, dx=172.5e-9, dy=172.5e-9, dz_voxel=172.5e-9,
              slice_spacing=300e-9, z0=500e-9, lambda_vacuum=630e-9,
              n_medium=1.33, na=0.4)
    kw.update(over)
    return make_grid(**kw)


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_dense_cap():
    g = tiny_grid(nx=32, ny=32, nz=8)  # 8192 voxels
    assert g.nx * g.ny * g.nz > MAX_DENSE_VOXELS
    with pytest.raises(GridTooLarge):
        build_dense(g)


@pytest.mark.parametrize("policy", SINGULAR_POLICIES)
def test_fft_matches_dense_H(policy):
    rng = np.random.default_rng(20)
    g = tiny_grid()
    dense = build_dense(g, singular_policy=policy)
    kern = build_kernels(g, singular_policy=policy)
    x = crandn(rng, g.shape)
    got = apply_H(kern, x)
    want = (dense.H @ x.ravel()).reshape(g.ny, g.nx)
    assert np.linalg.norm(got - want) <= 1e-8 * np.linalg.norm(want)


@pytest.mark.parametrize("policy", SINGULAR_POLICIES)
@pytest.mark.parametrize("mode", ["full", "forward_only", "backward_only"])
def test_fft_matches_dense_G(policy, mode):
    rng = np.random.default_rng(21)
    g = tiny_grid()
    dense = build_dense(g, singular_policy=policy)
    kern = build_kernels(g, singular_policy=policy)
    x = crandn(rng, g.shape)
    got = apply_G(kern, x, mode)
    want = (dense.G(mode) @ x.ravel()).reshape(g.shape)
    denom = max(np.linalg.norm(want), 1e-300)
    assert np.linalg.norm(got - want) <= 1e-8 * denom


def test_dense_masks_are_complementary():
    g = tiny_grid()
    dense = build_dense(g)
    assert np.allclose(dense.G_forward + dense.G_backward, dense.G_full)
    # forward entries live strictly below the block diagonal in slice index
    n = g.nx * g.ny
    blocks = dense.G_forward.reshape(g.nz, n, g.nz, n)
    for m in range(g.nz):
        for src in range(g.nz):
            if m >= src:
                assert np.all(blocks[m, :, src, :] == 0)


def test_dense_forward_first_order_is_linear():
    """K=1 output must be H diag(u_in) f: one matmul, no recursion."""
    rng = np.random.default_rng(22)
    g = tiny_grid()
    dense = build_dense(g)
    from bornholo import incident_plane_wave
    u_in = incident_plane_wave(g).values
    f = np.abs(rng.standard_normal(g.shape))
    u1, E1 = dense_forward(dense, f, u_in, order_K=1)
    assert np.allclose(u1, u_in.ravel())
    want = dense.H @ (u_in.ravel() * f.ravel())
    assert np.allclose(E1, want)
    # superposition in f at K=1
    f2 = np.abs(rng.standard_normal(g.shape))
    _, Ea = dense_forward(dense, f + f2, u_in, order_K=1)
    _, Eb = dense_forward(dense, f2, u_in, order_K=1)
    assert np.allclose(Ea, E1 + Eb, rtol=1e-12)
