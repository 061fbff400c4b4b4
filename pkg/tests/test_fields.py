import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcmtoggle import fields as fl
from pcmtoggle.geometry import ROLES, DeviceGeometry, build_grid
from pcmtoggle.materials import MaterialModel
from pcmtoggle.verify import (check_erfc_heat, check_kirchhoff, check_strip_resistance, check_superposition,
                              strip_grid, two_port_resistance)

SMALL = DeviceGeometry(domain_half_width=40e-9)
GRID = build_grid(SMALL)
T0 = np.full(GRID.shape, 293.0)


def uniform_sigma(grid, s=2e4):
    return np.where(grid.gst, s, 0.0)


def test_strip_resistance_oracle():
    c = check_strip_resistance()
    assert c.passed, c.line()


def test_strip_resistance_other_aspect():
    c = check_strip_resistance(sigma=1e3, n_long=25, n_wide=3, depth=5e-9)
    assert c.value < 0.01


def test_erfc_oracle():
    c = check_erfc_heat()
    assert c.passed, c.line()


def test_kirchhoff_oracle():
    c = check_kirchhoff(n_fields=20, grid=GRID)
    assert c.passed, c.line()


def test_superposition_oracle():
    c = check_superposition(grid=GRID)
    assert c.passed, c.line()


def test_equipotential_ports():
    sol = fl.solve_potential(GRID, uniform_sigma(GRID), None, T0, np.full(6, 0.7))
    problem = fl.ElectricalProblem(GRID)
    assert np.allclose(problem.gather(sol.V), 0.7, atol=1e-12)
    assert np.abs(sol.port_currents).max() < 1e-15


def test_depth_halving_halves_currents():
    Vp = np.zeros(6)
    Vp[ROLES.index("W1")] = 3.0
    a = fl.solve_potential(GRID, uniform_sigma(GRID), None, T0, Vp)
    g10 = build_grid(DeviceGeometry(domain_half_width=40e-9, out_of_plane_depth=10e-9))
    b = fl.solve_potential(g10, uniform_sigma(g10), None, T0, Vp)
    assert np.allclose(b.port_currents, 0.5 * a.port_currents, rtol=1e-12, atol=0)


def test_grid_refinement_resistance():
    # staircase contacts need h well below the contact radius to converge
    def r(h):
        g = build_grid(SMALL, h=h)
        Y = fl.factor_conductance(fl.ElectricalProblem(g), uniform_sigma(g)).Y
        return two_port_resistance(Y, "W1", "W2")
    coarse, fine = r(0.5e-9), r(0.25e-9)
    assert abs(coarse - fine) / fine < 0.03


def test_thomson_zero_without_seebeck():
    rng = np.random.default_rng(0)
    sig = np.where(GRID.gst, 10 ** rng.uniform(2, 5, GRID.shape), 0.0)
    T = 293 + 400 * rng.random(GRID.shape)
    Vp = rng.uniform(-1, 1, 6)
    with_zero = fl.solve_potential(GRID, sig, np.zeros(GRID.shape), T, Vp)
    without = fl.solve_potential(GRID, sig, None, T, Vp)
    assert np.all(with_zero.thomson == 0)
    assert np.array_equal(with_zero.joule, without.joule)
    assert np.array_equal(with_zero.port_currents, without.port_currents)
    assert np.all(without.joule >= 0)


def test_seebeck_drive_gives_current_without_bias():
    m = MaterialModel()
    T = np.where(GRID.gst, 293.0, 293.0)
    X, _ = np.meshgrid(GRID.x, GRID.y)
    T = T + 200 * (X > 0)
    S = np.where(GRID.gst, m.seebeck(1.0, T), 0.0)
    sol = fl.solve_potential(GRID, uniform_sigma(GRID), S, T, np.zeros(6))
    assert np.abs(sol.port_currents).max() > 0
    assert abs(sol.port_currents.sum()) < 1e-9 * np.abs(sol.port_currents).max()


def test_bad_port_voltages_rejected():
    with pytest.raises(ValueError):
        fl.solve_potential(GRID, uniform_sigma(GRID), None, T0, np.zeros(5))


def _thermal(shape=(30, 30), h=2e-9):
    bc = fl.ThermalBoundary.uniform(293.0)
    return fl.ThermalSolver(shape, h, bc), np.full(shape, 1.0), np.full(shape, 1.6e6)


def test_equilibrium_unchanged():
    solver, k, cap = _thermal()
    T = np.full((30, 30), 293.0)
    new, info = solver.step(T, 1e-10, np.zeros_like(T), k, cap)
    assert np.allclose(new, 293.0, atol=1e-10)
    assert abs(info.boundary_heat) < 1e-9


def test_hot_spot_dissipates_monotonically():
    solver, k, cap = _thermal()
    y, x = np.mgrid[0:30, 0:30]
    T = 293 + 500 * np.exp(-((x - 15) ** 2 + (y - 15) ** 2) / 8.0)
    excess = [(T - 293).sum()]
    for _ in range(20):
        T, _ = solver.step(T, 5e-11, np.zeros_like(T), k, cap)
        excess.append((T - 293).sum())
    assert all(b < a for a, b in zip(excess, excess[1:]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), dt=st.floats(1e-13, 1e-8))
def test_maximum_principle(seed, dt):
    rng = np.random.default_rng(seed)
    solver, k, cap = _thermal((12, 12))
    k = 0.2 + 5 * rng.random((12, 12))
    cap = 1e6 + 2e6 * rng.random((12, 12))
    T = 293 + 800 * rng.random((12, 12))
    new, _ = solver.step(T, dt, np.zeros_like(T), k, cap)
    assert new.min() >= 293.0 - 1e-9
    assert new.max() <= T.max() + 1e-9


def test_min_temperature_with_positive_sources():
    solver, k, cap = _thermal((12, 12))
    rng = np.random.default_rng(2)
    T = np.full((12, 12), 293.0)
    for _ in range(5):
        T, _ = solver.step(T, 1e-10, 1e15 * rng.random((12, 12)), k, cap)
    assert T.min() >= 293.0


def test_nan_source_rejected():
    solver, k, cap = _thermal((5, 5))
    q = np.zeros((5, 5))
    q[2, 2] = np.nan
    with pytest.raises(fl.SolverError):
        solver.step(np.full((5, 5), 293.0), 1e-10, q, k, cap)


def test_schur_fast_path_matches_direct():
    m = MaterialModel()
    x = np.where(GRID.gst, 1.0, 0.0)
    k, cap = fl.material_fields(GRID, m, x, T0)
    fast = fl.ThermalSolver(GRID.shape, GRID.h, fl.ThermalBoundary.uniform(293.0), GRID.gst, k, cap)
    slow = fl.ThermalSolver(GRID.shape, GRID.h, fl.ThermalBoundary.uniform(293.0))
    q = np.where(GRID.gst, 1e17, 0.0)
    k2 = k.copy()
    k2[GRID.gst] = 0.5
    a, ia = fast.step(T0, 1e-11, q, k2, cap)
    b, ib = slow.step(T0, 1e-11, q, k2, cap)
    assert np.allclose(a, b, rtol=0, atol=1e-9)
    assert ia.stored == pytest.approx(ib.stored, rel=1e-9)


def test_energy_balance_zero_idle():
    bal = fl.EnergyBalance(stored=1e-26, electrical_in=0.0, latent=0.0, boundary=0.0)
    assert bal.relative_residual < 1e-3
    rep = fl.energy_audit(bal)
    assert set(rep) >= {"residual_J", "relative_residual"}


def test_strip_grid_floating_ports_carry_no_current():
    g = strip_grid()
    Y = fl.factor_conductance(fl.ElectricalProblem(g), np.where(g.gst, 2e4, 0.0)).Y
    assert np.allclose(Y.sum(axis=1), 0, atol=1e-12 * np.abs(Y).max())
