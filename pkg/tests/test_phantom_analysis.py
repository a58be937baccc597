import numpy as np
import pytest

from bornholo import DegenerateTruth, PackingFailure, ZeroMeanHologram, make_grid
from bornholo.grid import Hologram2D
from bornholo.phantom_analysis import (
    ConvergenceReport,
    DetectedParticles,
    ParticleSet,
    PhantomSpec,
    contrast_ratio,
    convergence_metric,
    count_particles,
    depth_binned_recall,
    generate_phantom,
    geometric_density,
    match_particles,
    particles_for_density,
    snr_db,
)
from bornholo.propagation import build_kernels


def mk_grid(nx=64, ny=64, nz=4, slice_spacing=5e-6, z0=5e-6):
    return make_grid(nx=nx, ny=ny, nz=nz, dx=172.5e-9, dy=172.5e-9,
                     dz_voxel=172.5e-9, slice_spacing=slice_spacing, z0=z0,
                     lambda_vacuum=630e-9, n_medium=1.33, na=0.4)


def test_particles_for_density_reference_count():
    # 512x512 pixels of 172.5nm, 0.5um disks, 10% covered: 993 disks
    g = mk_grid(nx=512, ny=512, nz=20)
    assert particles_for_density(0.1, g, radius=0.5e-6) == 993
    assert particles_for_density(0.05, g, radius=0.5e-6) == 497


def test_geometric_density_round_trip():
    g = mk_grid()
    rng = np.random.default_rng(0)
    spec = PhantomSpec(n_particles=5, radius=0.5e-6, contrast=1.0)
    _, parts = generate_phantom(g, spec, rng)
    want = 5 * np.pi * 0.25e-12 / (64 * 64 * 172.5e-9 ** 2)
    assert geometric_density(parts, g) == pytest.approx(want, rel=1e-12)


def test_phantom_determinism_and_layout():
    g = mk_grid()
    spec = PhantomSpec(n_particles=6, radius=0.5e-6, contrast=2.0)
    v1, p1 = generate_phantom(g, spec, np.random.default_rng(42))
    v2, p2 = generate_phantom(g, spec, np.random.default_rng(42))
    assert np.array_equal(v1, v2)
    assert np.array_equal(p1.x, p2.x)
    assert len(p1) == 6
    # every particle sits on exactly one slice at a valid height
    assert set(np.round((p1.z - g.z0) / g.slice_spacing).astype(int)) <= set(range(g.nz))
    assert np.all(p1.contrast == 2.0)


def test_phantom_chord_profile_mass():
    """Rasterized disk mass approximates the parent sphere volume."""
    g = mk_grid(nz=1)
    spec = PhantomSpec(n_particles=1, radius=0.5e-6, contrast=1.0)
    v, parts = generate_phantom(g, spec, np.random.default_rng(3))
    mass = v.sum() * g.dx * g.dy * g.dz_voxel
    sphere = 4.0 / 3.0 * np.pi * 0.5e-6 ** 3
    assert mass == pytest.approx(sphere, rel=0.05)
    # peak cannot exceed the center chord 2r/dz
    assert v.max() <= 2 * 0.5e-6 / g.dz_voxel + 1e-9
    assert v.max() >= 0.8 * 2 * 0.5e-6 / g.dz_voxel


def test_phantom_same_slice_separation():
    g = mk_grid(nx=128, ny=128, nz=2)
    spec = PhantomSpec(n_particles=12, radius=0.5e-6, contrast=1.0)
    _, p = generate_phantom(g, spec, np.random.default_rng(7))
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p.z[i] == p.z[j]:
                d = np.hypot(p.x[i] - p.x[j], p.y[i] - p.y[j])
                assert d >= 2 * 0.5e-6 - 1e-15


def test_phantom_packing_failure():
    g = mk_grid(nx=16, ny=16, nz=1)
    spec = PhantomSpec(n_particles=40, radius=0.5e-6, contrast=1.0,
                       max_attempts_per_particle=50)
    with pytest.raises(PackingFailure):
        generate_phantom(g, spec, np.random.default_rng(0))
    # a disk wider than the field can never be placed
    tiny = mk_grid(nx=4, ny=4, nz=1)
    with pytest.raises(PackingFailure):
        generate_phantom(tiny, PhantomSpec(n_particles=1, radius=0.5e-6,
                                           contrast=1.0), np.random.default_rng(0))


def test_particle_set_tsv_round_trip(tmp_path):
    g = mk_grid()
    _, p = generate_phantom(g, PhantomSpec(n_particles=4, radius=0.5e-6,
                                           contrast=3.3), np.random.default_rng(1))
    path = tmp_path / "particles.tsv"
    p.to_tsv(path)
    q = ParticleSet.from_tsv(path)
    for a, b in zip((p.x, p.y, p.z, p.radius, p.contrast),
                    (q.x, q.y, q.z, q.radius, q.contrast)):
        assert np.array_equal(a, b)  # %.17g keeps float64 exact
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.tsv"
        bad.write_text("x\ty\n1\t2\n")
        ParticleSet.from_tsv(bad)


def test_snr_values_and_guards():
    rng = np.random.default_rng(2)
    truth = rng.random((3, 8, 8)) + 0.5
    assert snr_db(truth, truth) == 300.0
    assert snr_db(0.9 * truth, truth) == pytest.approx(20.0, abs=1e-12)
    assert snr_db(1.1 * truth, truth) == pytest.approx(20.0, abs=1e-12)
    with pytest.raises(DegenerateTruth):
        snr_db(truth, np.zeros_like(truth))
    with pytest.raises(ValueError):
        snr_db(truth, truth[:2])


def test_contrast_ratio():
    vals = np.array([[1.0, 3.0], [1.0, 3.0]])
    assert contrast_ratio(Hologram2D(vals, 1e-7, 1e-7)) == pytest.approx(0.5)
    assert contrast_ratio(Hologram2D(np.full((4, 4), 2.0), 1e-7, 1e-7)) == 0.0
    with pytest.raises(ZeroMeanHologram):
        contrast_ratio(Hologram2D(np.zeros((4, 4)), 1e-7, 1e-7))


def test_convergence_metric_properties():
    g = mk_grid(nx=32, ny=32, nz=3, slice_spacing=400e-9, z0=400e-9)
    kern = build_kernels(g)
    f = np.zeros(g.shape)
    f[1, 16, 16] = 5e12
    f[2, 10, 10] = 5e12
    rep = convergence_metric(kern, f, order_max=4)
    assert rep.e[0] == 1.0
    assert rep.e.shape == (5,)
    # weak scatterer: strictly decaying corrections
    assert rep.is_decreasing
    # zero volume: series terminates immediately
    rep0 = convergence_metric(kern, np.zeros(g.shape), order_max=3)
    assert np.array_equal(rep0.e, [1.0, 0.0, 0.0, 0.0])
    # first correction is linear in f
    rep2 = convergence_metric(kern, 2 * f, order_max=1)
    assert rep2.e[1] == pytest.approx(2 * rep.e[1], rel=1e-12)
    assert rep.ratio(1) == pytest.approx(rep.e[1], rel=1e-12)
    with pytest.raises(IndexError):
        rep.ratio(0)
    with pytest.raises(ValueError):
        convergence_metric(kern, f, order_max=0)


def test_count_particles_labels_and_centroids():
    g = mk_grid(nz=3)
    v = np.zeros(g.shape)
    # blob A: two voxels along x with weights 1 and 3
    v[1, 10, 10] = 1.0
    v[1, 10, 11] = 3.0
    # blob B: diagonal pair across slices (26-connectivity joins it)
    v[2, 30, 30] = 2.0
    v[1, 31, 31] = 2.0
    # single-voxel speck below min_voxels
    v[0, 50, 50] = 5.0
    det = count_particles(v, g, threshold=0.5, min_voxels=2)
    assert det.count == 2
    order = np.argsort(det.x)
    xa = det.x[order[0]]
    assert xa == pytest.approx((10 + 0.75) * g.dx, rel=1e-12)
    assert det.z[order[0]] == pytest.approx(g.slice_z(1), rel=1e-12)
    assert det.z[order[1]] == pytest.approx(g.z0 + 1.5 * g.slice_spacing, rel=1e-12)
    assert det.voxels.tolist() == [2, 2]
    # relative threshold after the 5.0 speck: everything else cut
    det_hi = count_particles(v, g, threshold_rel=0.9, min_voxels=1)
    assert det_hi.count == 1
    none = count_particles(np.zeros(g.shape), g, threshold=0.1)
    assert none.count == 0


def test_match_particles_greedy_one_to_one():
    truth = ParticleSet(x=[0.0, 10e-6, 20e-6], y=[0.0, 0.0, 0.0],
                        z=[5e-6, 5e-6, 5e-6], radius=[1e-6] * 3,
                        contrast=[1.0] * 3)
    det = DetectedParticles(
        count=4,
        x=np.array([0.2e-6, 10.1e-6, 40e-6, 0.4e-6]),
        y=np.zeros(4), z=np.full(4, 5e-6),
        voxels=np.full(4, 3), mass=np.ones(4))
    m = match_particles(truth, det, tol_lateral=1e-6, tol_axial=3e-6)
    assert m.n_matched == 2
    assert m.recall == pytest.approx(2 / 3)
    assert m.precision == pytest.approx(0.5)
    # nearest detection wins the shared truth; the spare one stays unmatched
    assert (0, 0) in m.pairs and (1, 1) in m.pairs
    assert not m.matched_det[2] and not m.matched_det[3]
    # axial miss despite lateral hit
    det2 = DetectedParticles(count=1, x=np.array([0.0]), y=np.zeros(1),
                             z=np.array([25e-6]), voxels=np.array([3]),
                             mass=np.ones(1))
    m2 = match_particles(truth, det2, tol_lateral=1e-6, tol_axial=3e-6)
    assert m2.n_matched == 0 and m2.precision == 0.0


def test_depth_binned_recall_layout():
    g = mk_grid(nz=8)
    # two particles per quartile of the slice range, alternating matched
    z = g.slice_heights[np.array([0, 1, 2, 3, 4, 5, 6, 7])]
    truth = ParticleSet(x=np.zeros(8), y=np.zeros(8), z=z,
                        radius=np.full(8, 1e-6), contrast=np.ones(8))
    matched = np.array([True, False, True, True, False, False, True, True])
    m = MatchStub = type("M", (), {})()
    m.n_true = 8
    m.matched_true = matched
    rec = depth_binned_recall(truth, m, g, n_bins=4)
    assert np.allclose(rec, [0.5, 1.0, 0.0, 1.0])
    empty_bins = depth_binned_recall(
        ParticleSet(x=[0], y=[0], z=[g.slice_z(0)], radius=[1e-6],
                    contrast=[1.0]),
        type("M", (), {"n_true": 1, "matched_true": np.array([True])})(),
        g, n_bins=4)
    assert empty_bins[0] == 1.0 and np.isnan(empty_bins[-1])
