"""Snapshot and trace output: legacy VTK structured points and CSV rasters."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .engine import Snapshot, trace_csv
from .geometry import Grid


def snapshot_fields(snap: Snapshot, grid: Grid, T_melt=873.0):
    molten = (grid.gst & (snap.T > T_melt)).astype(float)
    return {
        "cd1": snap.cd1,
        "cd2": snap.cd2,
        "crystallinity": snap.crystallinity,
        "molten": molten,
        "temperature": snap.T,
        "sigma": snap.sigma,
        "potential": snap.V,
        "material": grid.material.astype(float),
    }


def vtk_text(grid: Grid, fields: dict, title="pcmtoggle snapshot"):
    """Legacy ASCII VTK STRUCTURED_POINTS with one CELL_DATA scalar per field.

    Lengths are written in nanometres.
    """
    ny, nx = grid.shape
    h_nm = grid.h * 1e9
    x0 = (grid.x[0] - 0.5 * grid.h) * 1e9
    y0 = (grid.y[0] - 0.5 * grid.h) * 1e9
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title.replace("\n", " ")[:255] + "\n")
    out.write("ASCII\nDATASET STRUCTURED_POINTS\n")
    out.write(f"DIMENSIONS {nx + 1} {ny + 1} 1\n")
    out.write(f"ORIGIN {x0:.6g} {y0:.6g} 0\n")
    out.write(f"SPACING {h_nm:.6g} {h_nm:.6g} 1\n")
    out.write(f"CELL_DATA {nx * ny}\n")
    for name, arr in fields.items():
        arr = np.asarray(arr, float)
        if arr.shape != (ny, nx):
            raise ValueError(f"field {name!r} has shape {arr.shape}, expected {(ny, nx)}")
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        # x varies fastest, matching the row-major (j, i) layout
        np.savetxt(out, arr.reshape(-1, 8 if arr.size % 8 == 0 else 1), fmt="%.9g")
    return out.getvalue()


def read_vtk(path):
    """Parse a file written by ``write_vtk`` back into ``{name: array}``."""
    lines = Path(path).read_text().splitlines()
    dims = None
    fields = {}
    i = 0
    while i < len(lines):
        tok = lines[i].split()
        if tok and tok[0] == "DIMENSIONS":
            dims = (int(tok[2]) - 1, int(tok[1]) - 1)
        elif tok and tok[0] == "SCALARS":
            name = tok[1]
            n = dims[0] * dims[1]
            vals = []
            i += 2
            while len(vals) < n:
                vals.extend(float(v) for v in lines[i].split())
                i += 1
            fields[name] = np.array(vals).reshape(dims)
            continue
        i += 1
    return fields


def write_vtk(path, snap: Snapshot, grid: Grid, T_melt=873.0):
    path = Path(path)
    path.write_text(vtk_text(grid, snapshot_fields(snap, grid, T_melt),
                             title=f"t = {snap.t * 1e9:.6f} ns"))
    return path


def raster_csv(arr):
    """CSV raster with the top row of the device first."""
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(arr)[::-1], fmt="%.6g", delimiter=",")
    return buf.getvalue()


def write_snapshot(outdir, key, snap: Snapshot, grid: Grid, T_melt=873.0, rasters=("crystallinity", "temperature")):
    """VTK file plus CSV rasters of selected fields; returns the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [write_vtk(outdir / f"{key}.vtk", snap, grid, T_melt)]
    flds = snapshot_fields(snap, grid, T_melt)
    for name in rasters:
        p = outdir / f"{key}_{name}.csv"
        p.write_text(raster_csv(flds[name]))
        paths.append(p)
    return paths


def write_trace(path, rows):
    path = Path(path)
    path.write_text(trace_csv(rows))
    return path
