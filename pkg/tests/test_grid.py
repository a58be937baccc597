import numpy as np
import pytest

from bornholo import (
    InvalidNA,
    NonPositiveDimension,
    SamplingViolation,
    axial_resolution,
    contrast_from_index,
    incident_at_hologram,
    incident_plane_wave,
    make_grid,
)
from bornholo.grid import Hologram2D, InternalField, ObjectVolume


def std_grid(**over):
    kw = dict(nx=16, ny=16, nz=4, dx=172.5e-9, dy=172.5e-9, dz_voxel=172.5e-9,
              slice_spacing=5e-6, z0=5e-6, lambda_vacuum=630e-9,
              n_medium=1.33, na=0.4)
    kw.update(over)
    return make_grid(**kw)


def test_lambda_medium():
    g = std_grid()
    assert g.lambda_medium == pytest.approx(473.684210526315789e-9, rel=1e-12)


def test_wavenumber():
    g = std_grid()
    assert g.k == pytest.approx(13264502.3151569, rel=1e-12)


def test_shape_and_slice_heights():
    g = std_grid(nz=3)
    assert g.shape == (3, 16, 16)
    assert g.slice_z(0) == pytest.approx(5e-6)
    assert g.slice_z(2) == pytest.approx(15e-6)
    assert np.allclose(g.slice_heights, [5e-6, 10e-6, 15e-6])


def test_voxel_volume():
    g = std_grid()
    assert g.voxel_volume == pytest.approx(172.5e-9 ** 3, rel=1e-12)


def test_nyquist_guard():
    # dx above lambda_medium/2 = 236.8nm must be rejected
    with pytest.raises(SamplingViolation):
        std_grid(dx=240e-9)
    with pytest.raises(SamplingViolation):
        std_grid(dy=250e-9)
    std_grid(dx=236e-9)  # just under the limit is fine


@pytest.mark.parametrize("field,value", [
    ("nx", 0), ("ny", -3), ("nz", 0),
    ("dx", 0.0), ("dz_voxel", -1e-9), ("slice_spacing", 0.0),
    ("z0", 0.0), ("lambda_vacuum", 0.0), ("n_medium", 0.0),
])
def test_positivity_guards(field, value):
    with pytest.raises(NonPositiveDimension):
        std_grid(**{field: value})


def test_na_guard():
    with pytest.raises(InvalidNA):
        std_grid(na=0.0)
    with pytest.raises(InvalidNA):
        std_grid(na=1.4)  # must not exceed n_medium


def test_axial_resolution_value():
    # frozen from lambda_med / (1 - sqrt(1 - NA^2)) at NA=0.4
    g = std_grid()
    assert axial_resolution(g) == pytest.approx(5673.89350359227e-9, rel=1e-12)
    assert abs(axial_resolution(g) - 5.7e-6) < 0.05e-6


def test_axial_resolution_guards():
    g = std_grid()
    with pytest.raises(InvalidNA):
        axial_resolution(g, na=0.0)
    with pytest.raises(InvalidNA):
        axial_resolution(g, na=1.5)


def test_contrast_from_index_value():
    # frozen: (k^2 / 4 pi) (n_p^2 - n_m^2) / n_m^2 at n_p = 1.34
    g = std_grid()
    assert contrast_from_index(1.34, g) == pytest.approx(211339188336.73, rel=1e-10)
    with pytest.raises(ValueError):
        contrast_from_index(1.32, g)


def test_incident_plane_wave_unit_modulus():
    g = std_grid()
    u = incident_plane_wave(g)
    assert u.values.shape == g.shape
    assert np.allclose(np.abs(u.values), 1.0, atol=1e-13)
    assert u.order_k is None


def test_incident_plane_wave_phase_periodic():
    # slice heights at integer multiples of lambda_medium give value 1
    lm = 473.684210526315789e-9
    g = std_grid(z0=lm, slice_spacing=lm, nz=3)
    u = incident_plane_wave(g)
    assert np.allclose(u.values, 1.0, atol=1e-9)


def test_incident_phase_matches_outgoing_kernel():
    """u_in(z) * exp(ikz) must be constant: a slice's contribution at the
    detector then arrives carrier-aligned regardless of its height."""
    g = std_grid(nz=5)
    u = incident_plane_wave(g)
    z = g.slice_heights
    prod = u.values[:, 0, 0] * np.exp(1j * g.k * z)
    assert np.allclose(prod, prod[0], atol=1e-12)


def test_incident_at_hologram():
    g = std_grid()
    assert incident_at_hologram(g) == pytest.approx(1.0)


def test_object_volume_checks():
    g = std_grid()
    v = ObjectVolume.zeros(g)
    assert v.values.shape == g.shape and v.values.dtype == np.float64
    with pytest.raises(ValueError):
        ObjectVolume(g, np.zeros((2, 2, 2)))
    bad = np.zeros(g.shape)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ObjectVolume(g, bad)


def test_internal_field_order_zero_must_be_zero():
    g = std_grid()
    with pytest.raises(ValueError):
        InternalField(g, np.ones(g.shape, complex), order_k=0)
    InternalField(g, np.zeros(g.shape, complex), order_k=0)


def test_hologram_nonnegative():
    g = std_grid()
    with pytest.raises(ValueError):
        Hologram2D(-np.ones((g.ny, g.nx)), g.dx, g.dy)
