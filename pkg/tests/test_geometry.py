import math

import numpy as np
import pytest

from pcmtoggle.geometry import ROLES, DeviceGeometry, GeometryError, build_grid
from pcmtoggle.materials import Material

SMALL = DeviceGeometry(domain_half_width=40e-9)


@pytest.fixture(scope="module")
def fine():
    return build_grid(SMALL, h=1e-9)


def test_contact_areas_at_1nm(fine):
    for role in ROLES:
        area = fine.contact_mask(role).sum() * fine.h**2
        assert area == pytest.approx(math.pi * 10e-9**2, rel=0.10)


def test_patch_area_within_5_percent(fine):
    g = build_grid(DeviceGeometry())
    for grid in (fine, g):
        area = grid.patch.sum() * grid.h**2 * grid.depth
        assert area == pytest.approx(math.pi * 25e-9**2 * grid.depth, rel=0.05)
        assert np.all(grid.gst <= grid.patch)


def test_refinement_cell_count_ratio(fine):
    half = build_grid(SMALL, h=0.5e-9)
    assert half.gst.sum() / fine.gst.sum() == pytest.approx(4.0, rel=0.02)


def test_zero_radius_rejected():
    with pytest.raises(GeometryError):
        build_grid(DeviceGeometry(gst_radius=0.0))


def test_coarse_resolution_rejected():
    with pytest.raises(GeometryError, match="too coarse"):
        build_grid(DeviceGeometry(), h=4e-9)


def test_overlapping_contacts_rejected():
    with pytest.raises(GeometryError, match="overlap"):
        build_grid(DeviceGeometry(contact_radius=14e-9))


def test_roles_must_alternate():
    angles = {"W1": 90.0, "W2": 30.0, "R3": -30.0, "R1": -90.0, "W3": -150.0, "R2": 150.0}
    with pytest.raises(GeometryError, match="alternate"):
        build_grid(DeviceGeometry(angles_deg=angles))


def test_default_layout_alternates_at_60_degrees():
    geo = DeviceGeometry()
    order = sorted(ROLES, key=lambda r: geo.angles_deg[r] % 360)
    assert [r[0] for r in order] in (list("RWRWRW"), list("WRWRWR"))
    ang = sorted(a % 360 for a in geo.angles_deg.values())
    assert np.allclose(np.diff(ang), 60.0)


def test_path_length_identities():
    geo = DeviceGeometry()
    assert geo.path_length("W1", "R3") == pytest.approx(25e-9, rel=1e-12)
    assert geo.path_length("W1", "R1") == pytest.approx(50e-9, rel=1e-12)
    a = math.radians(geo.angles_deg["W1"] - geo.angles_deg["W2"])
    assert geo.path_length("W1", "W2") == pytest.approx(2 * 25e-9 * abs(math.sin(a / 2)), rel=1e-12)
    with pytest.raises(GeometryError):
        geo.path_length("W1", "W1")


def test_every_contact_touches_gst_and_gst_connected():
    from scipy import ndimage
    g = build_grid(DeviceGeometry())
    _, n = ndimage.label(g.gst)
    assert n == 1
    grown = ndimage.binary_dilation(g.gst)
    for role in ROLES:
        assert (grown & g.contact_mask(role)).any()
    assert set(np.unique(g.material)) == {int(m) for m in Material}


def test_deterministic():
    a, b = build_grid(DeviceGeometry()), build_grid(DeviceGeometry())
    assert np.array_equal(a.material, b.material)
    assert np.array_equal(a.contact, b.contact)


def test_mirror_symmetry():
    geo = DeviceGeometry()
    g = build_grid(geo)
    m = build_grid(geo.mirrored())
    # W1 axis is vertical, so reflection flips x
    assert np.array_equal(m.material, g.material[:, ::-1])
    for role in ROLES:
        assert np.array_equal(m.contact_mask(role), g.contact_mask(role)[:, ::-1])


def test_corridor_cells_are_gst():
    g = build_grid(DeviceGeometry())
    jj, ii = g.corridor_cells("W1", "W3")
    assert jj.size > 5
    assert np.all(g.gst[jj, ii])
    with pytest.raises(GeometryError):
        g.corridor_cells("W2", "W2")


def test_dump_csv_shape():
    g = build_grid(SMALL)
    rows = g.dump_csv().strip().splitlines()
    assert len(rows) == g.ny and len(rows[0].split(",")) == g.nx
