"""Analytic oracles for the field solvers and the engine energy balance.

Each check returns a ``Check`` with the measured error and its tolerance so
the CLI and the test suite report the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from . import fields as fl
from .geometry import ROLES, DeviceGeometry, Grid, build_grid
from .materials import Material


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3g} (tol {self.tolerance:g}) {self.detail}".rstrip()


def strip_grid(n_long=40, n_wide=6, h=2e-9, depth=20e-9) -> Grid:
    """GST bar between W1 (left end) and W2 (right end).

    The four remaining contacts are single TiN cells touching one bar cell
    each, so as floating ports they carry no current.
    """
    ny, nx = n_wide + 4, n_long + 2
    material = np.full((ny, nx), int(Material.OXIDE), dtype=np.int8)
    contact = np.full((ny, nx), -1, dtype=np.int8)
    material[2:2 + n_wide, 1:1 + n_long] = Material.GST
    for role, (j, i) in {"W1": (slice(2, 2 + n_wide), 0), "W2": (slice(2, 2 + n_wide), nx - 1)}.items():
        material[j, i] = Material.TIN
        contact[j, i] = ROLES.index(role)
    for k, role in enumerate(("W3", "R1", "R2", "R3")):
        j, i = 1, 2 + 3 * k
        material[j, i] = Material.TIN
        contact[j, i] = ROLES.index(role)
    geo = DeviceGeometry(out_of_plane_depth=depth)
    x = (np.arange(nx) + 0.5) * h
    y = (np.arange(ny) + 0.5) * h
    return Grid(geometry=geo, h=h, nx=nx, ny=ny, x=x, y=y, material=material, contact=contact)


def two_port_resistance(Y, a, b):
    """Resistance between ports ``a`` and ``b`` with all other ports floating."""
    ia, ib = ROLES.index(a), ROLES.index(b)
    keep = [i for i in range(len(ROLES)) if i != ib]
    rhs = np.zeros(len(keep))
    rhs[keep.index(ia)] = 1.0
    v = np.linalg.solve(Y[np.ix_(keep, keep)], rhs)
    return float(v[keep.index(ia)])


def check_strip_resistance(sigma=2e4, n_long=40, n_wide=6, h=2e-9, depth=20e-9) -> Check:
    grid = strip_grid(n_long, n_wide, h, depth)
    sig = np.where(grid.gst, sigma, 0.0)
    problem = fl.ElectricalProblem(grid)
    Y = fl.factor_conductance(problem, sig).Y
    R = two_port_resistance(Y, "W1", "W2")
    R_exact = (n_long * h) / (sigma * n_wide * h * depth)
    err = abs(R - R_exact) / R_exact
    return Check("strip resistance vs L/(sigma A)", err, 0.01, f"R={R:.6g} ohm, exact {R_exact:.6g} ohm")


def check_erfc_heat(n=200, h=2e-9, k=1.0, cap=1.6e6, T0=293.0, T1=400.0, dt=2e-12,
                    probes=((4, 0.5e-9), (10, 1.0e-9), (20, 2.0e-9))) -> Check:
    """Semi-infinite slab with a fixed hot left edge against the erfc solution.

    ``probes`` are (cell index, time) pairs; the error is relative to T1 - T0.
    """
    shape = (1, n)
    bc = fl.ThermalBoundary(left=T1, right=T0, bottom=None, top=None)
    solver = fl.ThermalSolver(shape, h, bc)
    kf = np.full(shape, k)
    cf = np.full(shape, cap)
    q = np.zeros(shape)
    T = np.full(shape, T0)
    alpha = k / cap
    xc = (np.arange(n) + 0.5) * h
    worst = 0.0
    t = 0.0
    for i, tp in sorted(probes, key=lambda p: p[1]):
        while t < tp - 0.5 * dt:
            T, _ = solver.step(T, dt, q, kf, cf)
            t += dt
        exact = T0 + (T1 - T0) * erfc(xc[i] / (2.0 * math.sqrt(alpha * t)))
        worst = max(worst, abs(T[0, i] - exact) / (T1 - T0))
    return Check("1D transient heat vs erfc", worst, 0.02, f"{len(probes)} probes")


def _random_sigma(grid, rng):
    sig = np.zeros(grid.shape)
    sig[grid.gst] = 10.0 ** rng.uniform(0, 5, int(grid.gst.sum()))
    return sig


def check_kirchhoff(n_fields=100, seed=0, grid: Grid | None = None) -> Check:
    grid = grid or build_grid(DeviceGeometry())
    problem = fl.ElectricalProblem(grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        sig = _random_sigma(grid, rng)
        Vp = rng.uniform(-3, 3, len(ROLES))
        sol = fl.solve_potential(grid, sig, None, np.full(grid.shape, grid.T_boundary), Vp,
                                 problem=problem)
        I = sol.port_currents
        worst = max(worst, abs(I.sum()) / np.abs(I).max())
    return Check("Kirchhoff port-current sum", worst, 1e-9, f"{n_fields} random sigma fields")


def check_superposition(n_trials=5, seed=1, grid: Grid | None = None) -> Check:
    grid = grid or build_grid(DeviceGeometry())
    problem = fl.ElectricalProblem(grid)
    rng = np.random.default_rng(seed)
    T = np.full(grid.shape, grid.T_boundary)
    worst = 0.0
    for _ in range(n_trials):
        sig = _random_sigma(grid, rng)
        mp = fl.extract_multiport(problem, sig, None, T)
        va, vb = rng.uniform(-3, 3, (2, len(ROLES)))
        alpha = rng.uniform(-4, 4)
        sa, sb, sab = mp.solution(va), mp.solution(vb), mp.solution(alpha * va + vb)
        scale = max(np.abs(sab.port_currents).max(), 1e-30)
        worst = max(worst,
                    np.abs(sab.port_currents - alpha * sa.port_currents - sb.port_currents).max() / scale,
                    np.abs(sab.V - alpha * sa.V - sb.V).max() / max(np.abs(sab.V).max(), 1e-30))
    return Check("superposition and linearity", worst, 1e-9, f"{n_trials} trials")


def check_energy_audit(run_cfg=None, t_end=20e-9) -> Check:
    """Worst per-step relative energy residual across one write cycle."""
    from .experiments import build_simulation, write_event
    from .engine import Schedule

    from .config import load
    cfg = run_cfg or load()
    sim = build_simulation(cfg, "flipflop")
    ev = write_event(cfg, 1e-9, "write")
    sched = Schedule([ev])
    sched.apply(sim.network, cfg.circuit["VDD"])
    sim.run(sched, t_end=t_end)
    worst = max(sim.audits) if sim.audits else float("nan")
    return Check("energy audit over a write cycle", worst, 1e-3, f"{len(sim.audits)} steps")


def run_all(include_engine=True):
    checks = [check_strip_resistance(), check_erfc_heat(), check_kirchhoff(), check_superposition()]
    if include_engine:
        checks.append(check_energy_audit())
    return checks
