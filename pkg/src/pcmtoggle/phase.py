"""Crystal-density (CD) vector field and its rate equation.

Each GST cell carries two orientation components ``cd1`` and ``cd2``; their
sum is the local crystallinity (1 crystalline, 0 amorphous).  The rate
equation has three terms: nucleation (Poisson seeding), orientation-
preserving growth from the 4-neighbourhood, and amorphization above the
melting point.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Grid


class StepSizeError(RuntimeError):
    """Raised when a single step would change crystallinity by more than 1."""


@dataclass
class CDField:
    cd1: np.ndarray
    cd2: np.ndarray
    mask: np.ndarray

    @property
    def crystallinity(self):
        return self.cd1 + self.cd2

    def copy(self):
        return CDField(self.cd1.copy(), self.cd2.copy(), self.mask)

    def dominant(self):
        """1 or 2 where a component dominates, 0 for amorphous or non-GST cells."""
        out = np.where(self.cd1 >= self.cd2, 1, 2).astype(np.int8)
        out[(self.crystallinity <= 0.0) | ~self.mask] = 0
        return out

    def check(self, tol=1e-12):
        if (self.cd1 < -tol).any() or (self.cd2 < -tol).any():
            raise AssertionError("negative CD component")
        if (self.crystallinity > 1 + tol).any():
            raise AssertionError("crystallinity above 1")
        if (self.cd1[~self.mask] != 0).any() or (self.cd2[~self.mask] != 0).any():
            raise AssertionError("CD state outside GST")


def _bump(T, T_lo, T_hi, T_peak=None):
    """Smooth window on (T_lo, T_hi) equal to 1 at ``T_peak`` (midpoint by default).

    The normalized temperature is warped by a power so the sin^2 peak lands on
    ``T_peak``; both ends keep zero value and zero slope.
    """
    s = np.clip((np.asarray(T, dtype=float) - T_lo) / (T_hi - T_lo), 0.0, 1.0)
    if T_peak is not None:
        s = s ** (math.log(0.5) / math.log((T_peak - T_lo) / (T_hi - T_lo)))
    return np.where((s > 0.0) & (s < 1.0), np.sin(np.pi * s) ** 2, 0.0)


@dataclass
class PhaseRates:
    """Temperature-windowed crystallization rates and the melt decay rate."""

    growth_peak: float = 1.0e9
    nucleation_peak: float = 2.0e7
    amorphization_rate: float = 1.0e11
    eps_nuc: float = 0.1
    T_peak: float | None = None
    T_glass: float = 420.0
    T_melt: float = 873.0
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.growth_peak, self.nucleation_peak, self.amorphization_rate) < 0:
            raise ValueError("phase rates must be non-negative")
        if self.amorphization_rate < 100 * self.growth_peak:
            raise ValueError("amorphization_rate must be at least 100x the peak growth rate")
        if not 0 < self.eps_nuc <= 1:
            raise ValueError("eps_nuc must lie in (0, 1]")
        if self.T_peak is not None and not self.T_glass < self.T_peak < self.T_melt:
            raise ValueError("T_peak must lie strictly between T_glass and T_melt")

    def growth_rate(self, T):
        return self.growth_peak * _bump(T, self.T_glass, self.T_melt, self.T_peak)

    def nucleation_rate(self, T):
        return self.nucleation_peak * _bump(T, self.T_glass, self.T_melt, self.T_peak)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown phase fields: {sorted(unknown)}")
        return cls(**data)


def cell_uniforms(seed, step, n, stream=0):
    """``n`` uniforms for one step from a counter-based generator.

    The step index and stream select disjoint counter ranges, so draws never
    depend on how many steps or cells were processed before.
    """
    counter = (int(step) << 192) | (int(stream) << 128)
    bitgen = np.random.Philox(key=int(seed) & ((1 << 128) - 1), counter=counter)
    return np.random.Generator(bitgen).random(n)


def init_grain_map(grid: Grid, seed: int, n_grains: int = 8) -> CDField:
    """Fully crystalline field split into Voronoi grains of alternating orientation."""
    mask = grid.gst.copy()
    r = grid.geometry.gst_radius
    u = cell_uniforms(seed, 0, 2 * n_grains, stream=7)
    rad = r * np.sqrt(u[:n_grains])
    ang = 2 * np.pi * u[n_grains:]
    sx, sy = rad * np.cos(ang), rad * np.sin(ang)
    X, Y = np.meshgrid(grid.x, grid.y)
    jj, ii = np.nonzero(mask)
    d2 = (X[jj, ii][:, None] - sx[None, :]) ** 2 + (Y[jj, ii][:, None] - sy[None, :]) ** 2
    owner = np.argmin(d2, axis=1)
    cd1 = np.zeros(grid.shape)
    cd2 = np.zeros(grid.shape)
    orient1 = owner % 2 == 0
    cd1[jj[orient1], ii[orient1]] = 1.0
    cd2[jj[~orient1], ii[~orient1]] = 1.0
    return CDField(cd1, cd2, mask)


def _neighbour_sum(a):
    s = np.zeros_like(a)
    s[1:, :] += a[:-1, :]
    s[:-1, :] += a[1:, :]
    s[:, 1:] += a[:, :-1]
    s[:, :-1] += a[:, 1:]
    return s


def rate_step(cd: CDField, T, dt, rates: PhaseRates, step_index=0, melt_limit=None):
    """Advance the CD field by ``dt`` at temperature ``T`` (Jacobi update).

    ``melt_limit`` optionally caps the crystallinity lost to amorphization in
    each cell (the engine passes the melt fraction the cell's superheat can
    pay for).  Returns the new field and the crystallinity rate in 1/s.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T[cd.mask])):
        raise ValueError("non-finite temperature in GST")
    mask = cd.mask
    c1, c2 = cd.cd1, cd.cd2
    total = c1 + c2

    hot = mask & (T > rates.T_melt)
    window = mask & (T > rates.T_glass) & ~hot

    # growth from frozen neighbourhood
    g = np.where(window, rates.growth_rate(T), 0.0) * dt
    room = 1.0 - total
    d1 = g * _neighbour_sum(c1) / 4.0 * room
    d2 = g * _neighbour_sum(c2) / 4.0 * room
    if (d1 + d2).max(initial=0.0) > 1.0:
        raise StepSizeError(f"growth change {(d1 + d2).max():.3g} exceeds 1 in one step")

    # amorphization: exponential decay toward zero, optionally heat-limited
    loss = np.where(hot, total * -np.expm1(-rates.amorphization_rate * dt), 0.0)
    if melt_limit is not None:
        loss = np.minimum(loss, np.maximum(melt_limit, 0.0))
    keep = np.where(total > 0, 1.0 - loss / np.where(total > 0, total, 1.0), 1.0)

    n1 = np.where(hot, c1 * keep, c1 + d1)
    n2 = np.where(hot, c2 * keep, c2 + d2)

    # nucleation events
    jj, ii = np.nonzero(window)
    if jj.size and rates.nucleation_peak > 0:
        flat = np.ravel_multi_index((jj, ii), T.shape)
        u = cell_uniforms(rates.rng_seed, step_index + 1, 2 * T.size, stream=1)
        p = rates.nucleation_rate(T[jj, ii]) * dt
        fire = u[2 * flat] < p
        if fire.any():
            fj, fi = jj[fire], ii[fire]
            comp1 = u[2 * flat[fire] + 1] < 0.5
            add = np.minimum(rates.eps_nuc, np.maximum(1.0 - n1[fj, fi] - n2[fj, fi], 0.0))
            n1[fj[comp1], fi[comp1]] += add[comp1]
            n2[fj[~comp1], fi[~comp1]] += add[~comp1]

    n1 = np.clip(n1, 0.0, 1.0)
    n2 = np.clip(n2, 0.0, 1.0)
    s = n1 + n2
    over = s > 1.0
    n1[over] /= s[over]
    n2[over] /= s[over]
    n1[~mask] = 0.0
    n2[~mask] = 0.0
    new = CDField(n1, n2, mask)
    return new, (new.crystallinity - total) / dt


def crystallinity_along_path(cd: CDField, grid: Grid, c1, c2):
    """Minimum crystallinity over the straight corridor between two contacts."""
    jj, ii = grid.corridor_cells(c1, c2)
    if jj.size == 0:
        return 1.0
    return float(np.clip(cd.crystallinity[jj, ii].min(), 0.0, 1.0))
