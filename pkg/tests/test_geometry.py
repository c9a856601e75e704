import numpy as np
import pytest
from hypothesis import given, strategies as st

from simtrx.geometry import (
    FieldRegion,
    UePlacement,
    build_urpa_geometry,
    centered_grid,
    classify_range,
    field_region,
    rayleigh_distance,
    wavelength,
)

LAM = wavelength(10e9)


def test_wavelength_at_carrier():
    assert LAM == pytest.approx(0.03, rel=0, abs=1e-15)


def test_layers_stack_along_z():
    geo = build_urpa_geometry((4, 4), LAM / 4, (5 * LAM, 5 * LAM))
    assert geo.num_layers == 2
    assert geo.layer_positions.shape == (3, 16, 3)
    np.testing.assert_allclose(geo.layer_z, [0.0, 0.15, 0.30])
    assert geo.output_z == pytest.approx(0.30)
    # every layer has the same transverse grid
    np.testing.assert_array_equal(geo.layer_positions[0, :, :2], geo.layer_positions[2, :, :2])


def test_feeds_are_centered():
    geo = build_urpa_geometry((8, 8), LAM / 4, (), feed_counts=(2, 1), feed_spacing=LAM / 2)
    np.testing.assert_allclose(geo.feed_positions[:, 0], [-0.0075, 0.0075])
    np.testing.assert_allclose(geo.feed_positions[:, 1:], 0.0)


def test_positions_are_read_only():
    geo = build_urpa_geometry((2, 2), 0.01)
    with pytest.raises(ValueError):
        geo.layer_positions[0, 0, 0] = 1.0


@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_index_roundtrip(nx, ny, data):
    geo = build_urpa_geometry((nx, ny), 0.01)
    n = data.draw(st.integers(0, geo.N - 1))
    ix, iy = geo.element_rowcol(n)
    assert geo.element_index(ix, iy) == n
    pts = centered_grid(nx, ny, 0.01, 0.01)
    assert pts[n, 0] == pytest.approx((ix - (nx - 1) / 2) * 0.01)
    assert pts[n, 1] == pytest.approx((iy - (ny - 1) / 2) * 0.01)


@given(st.integers(1, 10), st.integers(1, 10))
def test_grid_centroid_is_origin(nx, ny):
    pts = centered_grid(nx, ny, 0.3, 0.7)
    np.testing.assert_allclose(pts.mean(axis=0), 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(element_counts=(0, 4), element_size=0.01),
        dict(element_counts=(4, 4), element_size=-0.01),
        dict(element_counts=(4, 4), element_size=0.01, distances=(-0.1,)),
        dict(element_counts=(4, 4), element_size=0.01, feed_spacing=0.0),
        dict(element_counts=(4, 4, 4), element_size=0.01),
    ],
)
def test_invalid_geometry_rejected(kwargs):
    with pytest.raises(ValueError):
        build_urpa_geometry(**kwargs)


def test_index_out_of_range():
    geo = build_urpa_geometry((3, 3), 0.01)
    with pytest.raises(IndexError):
        geo.element_index(3, 0)
    with pytest.raises(IndexError):
        geo.element_rowcol(9)


def test_user_in_output_plane_rejected():
    geo = build_urpa_geometry((4, 4), LAM / 4, (0.15,))
    with pytest.raises(ValueError, match="layer-L plane"):
        UePlacement([[0.1, 0.0, 0.15]]).check(geo)
    UePlacement([[0.1, 0.0, 0.5]]).check(geo)


def test_rayleigh_distance_scales():
    big = build_urpa_geometry((256, 256), LAM / 4)
    desk = build_urpa_geometry((16, 16), LAM / 4)
    assert rayleigh_distance(big, LAM) == pytest.approx(491.52)
    assert rayleigh_distance(desk, LAM) == pytest.approx(1.92)
    # at full size the baseline users are in the radiative near field
    assert field_region(big, LAM, (0, 0, 20)) is FieldRegion.RADIATIVE_NEAR_FIELD
    assert field_region(desk, LAM, (0, 0, 20)) is FieldRegion.FAR_FIELD


def test_classify_range_boundaries():
    D = 1.0
    assert classify_range(2 * D**2 / LAM, D, LAM) is FieldRegion.FAR_FIELD
    assert classify_range(0.01, D, LAM) is FieldRegion.REACTIVE_NEAR_FIELD
