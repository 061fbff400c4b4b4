"""Six-contact device geometry rasterized onto a uniform 2D cell grid."""

from __future__ import annotations

import dataclasses
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .materials import Material

ROLES = ("W1", "W2", "W3", "R1", "R2", "R3")

# angles in degrees; W and R alternate, mirror-symmetric about the W1 axis
DEFAULT_ANGLES = {"W1": 90.0, "R3": 30.0, "W3": -30.0, "R1": -90.0, "W2": -150.0, "R2": 150.0}


class GeometryError(ValueError):
    pass


@dataclass
class DeviceGeometry:
    gst_radius: float = 25e-9
    contact_radius: float = 10e-9
    contact_center_radius: float | None = None
    domain_half_width: float = 250e-9
    out_of_plane_depth: float = 20e-9
    angles_deg: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_ANGLES))

    def __post_init__(self):
        if self.contact_center_radius is None:
            self.contact_center_radius = self.gst_radius
        self.angles_deg = {k: float(v) for k, v in self.angles_deg.items()}

    def validate(self):
        if not self.gst_radius > 0:
            raise GeometryError("gst_radius must be positive")
        if not self.contact_radius > 0:
            raise GeometryError("contact_radius must be positive")
        if not self.out_of_plane_depth > 0:
            raise GeometryError("out_of_plane_depth must be positive")
        if sorted(self.angles_deg) != sorted(ROLES):
            raise GeometryError(f"contact roles must be exactly {ROLES}")
        order = sorted(ROLES, key=lambda r: self.angles_deg[r] % 360.0)
        kinds = [r[0] for r in order]
        if any(kinds[i] == kinds[(i + 1) % 6] for i in range(6)):
            raise GeometryError("write and read contacts must alternate around the patch")
        reach = self.contact_center_radius + self.contact_radius
        if reach >= self.domain_half_width:
            raise GeometryError("contacts extend past the simulation domain")
        for i, a in enumerate(ROLES):
            for b in ROLES[i + 1:]:
                if self.center_distance(a, b) <= 2 * self.contact_radius:
                    raise GeometryError(f"contacts {a} and {b} overlap")

    def center(self, role):
        if role not in self.angles_deg:
            raise GeometryError(f"unknown contact {role!r}")
        a = math.radians(self.angles_deg[role])
        r = self.contact_center_radius
        return r * math.cos(a), r * math.sin(a)

    def center_distance(self, c1, c2):
        (x1, y1), (x2, y2) = self.center(c1), self.center(c2)
        return math.hypot(x2 - x1, y2 - y1)

    def path_length(self, c1, c2):
        """Chord distance between two contact centers."""
        if c1 == c2:
            raise GeometryError("path_length needs two distinct contacts")
        return self.center_distance(c1, c2)

    def mirrored(self):
        """Geometry reflected about the W1 axis."""
        ref = math.degrees(2 * math.radians(self.angles_deg["W1"]))
        angles = {r: (ref - a) for r, a in self.angles_deg.items()}
        return dataclasses.replace(self, angles_deg=angles)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(eq=False)
class Grid:
    geometry: DeviceGeometry
    h: float
    nx: int
    ny: int
    x: np.ndarray
    y: np.ndarray
    material: np.ndarray
    contact: np.ndarray
    T_boundary: float = 293.0

    @property
    def depth(self):
        return self.geometry.out_of_plane_depth

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def gst(self):
        return self.material == Material.GST

    @property
    def patch(self):
        """Cells whose centers lie inside the patch circle, including contact overlap."""
        X, Y = np.meshgrid(self.x, self.y)
        return X**2 + Y**2 < self.geometry.gst_radius**2

    def contact_mask(self, role):
        return self.contact == ROLES.index(role)

    def cell_of(self, px, py):
        i = int(math.floor((px - self.x[0]) / self.h + 0.5))
        j = int(math.floor((py - self.y[0]) / self.h + 0.5))
        return j, i

    def corridor_cells(self, c1, c2):
        """GST cells crossed by the straight segment joining two contact centers."""
        if c1 == c2:
            raise GeometryError("corridor needs two distinct contacts")
        (x1, y1), (x2, y2) = self.geometry.center(c1), self.geometry.center(c2)
        n = max(2, int(math.ceil(math.hypot(x2 - x1, y2 - y1) / (self.h / 8))))
        cells = []
        seen = set()
        for s in np.linspace(0.0, 1.0, n + 1):
            jj, ii = self.cell_of(x1 + s * (x2 - x1), y1 + s * (y2 - y1))
            if (jj, ii) not in seen and self.material[jj, ii] == Material.GST:
                seen.add((jj, ii))
                cells.append((jj, ii))
        return tuple(np.array(c) for c in zip(*cells)) if cells else (np.array([], int),) * 2

    def dump_csv(self, which="material"):
        arr = self.material if which == "material" else self.contact
        buf = io.StringIO()
        np.savetxt(buf, arr[::-1].astype(int), fmt="%d", delimiter=",")
        return buf.getvalue()


def build_grid(geometry: DeviceGeometry, h: float = 2e-9, T_boundary: float = 293.0) -> Grid:
    """Rasterize the device by cell-center inclusion tests.

    Contacts overwrite GST and oxide.  The domain is a square of side
    ``2*domain_half_width`` centered on the patch.
    """
    geometry.validate()
    if not h > 0 or h > geometry.contact_radius / 4 * (1 + 1e-9):
        raise GeometryError(
            f"cell size {h:g} m too coarse: need h <= contact_radius/4 = {geometry.contact_radius / 4:g} m")
    n = int(round(2 * geometry.domain_half_width / h))
    if abs(n * h - 2 * geometry.domain_half_width) > 1e-6 * h:
        raise GeometryError("domain width must be an integer number of cells")
    c = -geometry.domain_half_width + (np.arange(n) + 0.5) * h
    X, Y = np.meshgrid(c, c)
    material = np.full((n, n), int(Material.OXIDE), dtype=np.int8)
    material[X**2 + Y**2 < geometry.gst_radius**2] = Material.GST
    contact = np.full((n, n), -1, dtype=np.int8)
    for idx, role in enumerate(ROLES):
        cx, cy = geometry.center(role)
        inside = (X - cx) ** 2 + (Y - cy) ** 2 < geometry.contact_radius**2
        if not inside.any():
            raise GeometryError(f"contact {role} covers no cells at h={h:g}")
        contact[inside] = idx
        material[inside] = Material.TIN

    gst = material == Material.GST
    if not gst.any():
        raise GeometryError("GST patch covers no cells")
    labels, nlab = ndimage.label(gst)
    if nlab != 1:
        raise GeometryError(f"GST patch split into {nlab} disconnected pieces")
    grown = ndimage.binary_dilation(gst)
    for idx, role in enumerate(ROLES):
        if not (grown & (contact == idx)).any():
            raise GeometryError(f"contact {role} does not touch the GST patch")
    return Grid(geometry=geometry, h=h, nx=n, ny=n, x=c.copy(), y=c.copy(),
                material=material, contact=contact, T_boundary=T_boundary)
