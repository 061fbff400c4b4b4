import numpy as np

from pcmtoggle.engine import Snapshot
from pcmtoggle.geometry import DeviceGeometry, build_grid
from pcmtoggle.io import raster_csv, read_vtk, write_snapshot, write_trace

GRID = build_grid(DeviceGeometry(domain_half_width=40e-9))


def _snap():
    rng = np.random.default_rng(0)
    f = lambda: rng.random(GRID.shape)  # noqa: E731
    c1 = np.where(GRID.gst, f(), 0.0)
    return Snapshot(1.5e-9, c1, np.where(GRID.gst, (1 - c1) * f(), 0.0), 293 + 600 * f(), f(), f())


def test_vtk_round_trip(tmp_path):
    snap = _snap()
    paths = write_snapshot(tmp_path, "s", snap, GRID)
    assert [p.name for p in paths] == ["s.vtk", "s_crystallinity.csv", "s_temperature.csv"]
    back = read_vtk(paths[0])
    assert set(back) >= {"cd1", "cd2", "crystallinity", "molten", "temperature", "sigma", "potential", "material"}
    for name, ref in (("cd1", snap.cd1), ("temperature", snap.T), ("potential", snap.V)):
        assert np.allclose(back[name], ref, rtol=1e-8, atol=1e-12)
    assert np.array_equal(back["molten"] > 0, GRID.gst & (snap.T > 873.0))
    head = paths[0].read_text().splitlines()
    assert head[0].startswith("# vtk DataFile Version") and "1.500000 ns" in head[1]


def test_raster_top_row_first():
    a = np.arange(6.0).reshape(2, 3)
    assert raster_csv(a).splitlines()[0] == "3,4,5"


def test_write_trace(tmp_path):
    rows = [{"t_ns": 1.0, "event": "w"}]
    p = write_trace(tmp_path / "t.csv", rows)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("t_ns,") and lines[1] == "1,,,,,,,,w,,,,,,"
