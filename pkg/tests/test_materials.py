import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcmtoggle.materials import K_B_EV, Material, MaterialModel, dump_tables

M = MaterialModel()


def test_crystalline_branch_exact():
    assert M.sigma(1.0, 300.0, 0.0) == M.sigma_c0


def test_amorphous_contrast_at_room_temperature():
    ratio = M.sigma_c0 / M.sigma(0.0, 300.0, 0.0)
    assert ratio == pytest.approx(1e4, rel=0.2)


def test_amorphous_arrhenius_hand_value():
    expected = M.sigma_a0 * math.exp(-M.Ea_a / K_B_EV * (1.0 / 600.0))
    assert M.sigma(0.0, 600.0, 0.0) == pytest.approx(expected, rel=1e-12)


def test_prefactor_sets_contrast():
    m = MaterialModel(contrast_300K=2e3)
    assert m.sigma_c0 / m.sigma(0.0, 300.0) == pytest.approx(2e3, rel=1e-12)


def test_molten_override():
    assert M.sigma(0.3, 1000.0, 0.0, molten=True) == M.sigma_melt


def test_parallel_mixing():
    x, T = 0.25, 450.0
    want = x * M.sigma_crystalline(T) + (1 - x) * M.sigma_amorphous(T)
    assert M.sigma(x, T) == pytest.approx(want, rel=1e-14)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        M.sigma(0.5, float("nan"))
    with pytest.raises(ValueError):
        M.seebeck(0.5, float("inf"))


def test_seebeck_disabled():
    m = MaterialModel(S_c=(0.0, 0.0), S_a=(0.0, 0.0))
    T = np.linspace(293, 1200, 7)
    assert np.all(m.seebeck(0.3, T) == 0.0)


def test_seebeck_pure_branch():
    assert M.seebeck(1.0, 300.0) == pytest.approx(M.S_c[0], rel=1e-14)


def test_seebeck_conductance_weighted_half_mix():
    gc = 0.5 * M.sigma_crystalline(300.0)
    ga = 0.5 * M.sigma_amorphous(300.0)
    want = (gc * M.S_c[0] + ga * M.S_a[0]) / (gc + ga)
    assert M.seebeck(0.5, 300.0) == pytest.approx(want, rel=1e-12)


def test_seebeck_continuous_at_melt():
    assert M.S_a[0] + M.S_a[1] * (M.T_melt - 300) == pytest.approx(M.S_c[0] + M.S_c[1] * (M.T_melt - 300))


def test_latent_zero_rate():
    assert M.latent_heat_rate(0.0, 700.0) == 0.0


def test_latent_melting_hand_value():
    q = M.latent_heat_rate(-1e9, M.T_melt)
    assert q == pytest.approx(-1e9 * M.dH_ac * 6.2e6, rel=1e-12)
    assert q < 0


def test_oxide_conductivity_constant():
    assert M.thermal_k(Material.OXIDE, 0.0, 300.0) == M.k_ox[0]


def test_unknown_material_rejected():
    with pytest.raises(ValueError):
        M.thermal_k(17, 0.0, 300.0)


def test_density_default():
    assert M.d == 6.2


def test_property_sweep_positive_finite_monotone():
    T = np.linspace(293, 1200, 100)
    E = np.linspace(0, 1e8, 100)
    TT, EE = np.meshgrid(T, E, indexing="ij")
    for x in (0.0, 0.5, 1.0):
        s = M.sigma(x, TT, EE)
        assert np.all(np.isfinite(s)) and np.all(s > 0)
        assert np.all(np.diff(s, axis=0) >= 0)
        assert np.all(np.diff(s, axis=1) >= 0)


def test_crystalline_branch_field_independent():
    T = np.linspace(293, 1200, 50)
    assert np.array_equal(M.sigma(1.0, T, 0.0), M.sigma(1.0, T, 9e7))


def test_positive_thermal_properties():
    T = np.linspace(293, 2000, 200)
    for mat in Material:
        assert np.all(M.thermal_k(mat, 0.5, T) > 0)
        assert np.all(M.volumetric_heat_capacity(mat, T) > 0)
    assert np.all(M.heat_capacity(T) > 0)


@given(rate=st.floats(-1e12, 1e12), T=st.floats(293, 1500))
def test_latent_odd(rate, T):
    assert M.latent_heat_rate(-rate, T) == -M.latent_heat_rate(rate, T)


@settings(max_examples=50)
@given(x=st.floats(0, 1), T=st.floats(293, 1200), E=st.floats(0, 1e8))
def test_amorphous_monotone_in_T_and_E(x, T, E):
    assert M.sigma_amorphous(T + 1.0, E) >= M.sigma_amorphous(T, E)
    assert M.sigma_amorphous(T, E + 1e5) >= M.sigma_amorphous(T, E)


def test_config_round_trip():
    m = MaterialModel(Ea_c=0.05, k_a=(0.4, 1e-4))
    back = MaterialModel.from_dict(m.to_dict())
    T = np.linspace(293, 1200, 30)
    for x in (0.0, 0.4, 1.0):
        assert np.array_equal(back.sigma(x, T, 1e7), m.sigma(x, T, 1e7))
        assert np.array_equal(back.seebeck(x, T), m.seebeck(x, T))
        assert np.array_equal(back.thermal_k(Material.GST, x, T), m.thermal_k(Material.GST, x, T))


def test_unknown_field_rejected():
    with pytest.raises(ValueError):
        MaterialModel.from_dict({"bogus": 1})


def test_dump_tables_csv():
    text = dump_tables(M, 293, 1200)
    lines = text.strip().splitlines()
    assert lines[0].startswith("T_K")
    assert len(lines) > 10
