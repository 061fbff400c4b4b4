"""Phase-, temperature- and field-dependent material properties.

GST (Ge2Sb2Te5) is described by closed-form branches for the crystalline,
amorphous and molten states.  Partially crystalline cells mix the
crystalline and amorphous branches in parallel, weighted by the local
crystallinity (the one-norm of the crystal-density vector).

Units follow the usual device-physics conventions at the API boundary:
conductivity in S/m, Seebeck in V/K, thermal conductivity in W/(m K),
specific heat in J/(g K), latent heat in J/g and density in g/cm^3.
Volumetric quantities returned to the solvers are SI (J/(m^3 K), W/m^3).
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

K_B_EV = 8.617333262e-5  # eV/K
G_PER_CM3_TO_G_PER_M3 = 1.0e6


class Material(IntEnum):
    OXIDE = 0
    GST = 1
    TIN = 2


def _check_finite(name, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{name}: non-finite input")


@dataclass
class MaterialModel:
    """Parameter set for GST, TiN contacts and the oxide surround.

    ``sigma_a0`` defaults to the Arrhenius prefactor that puts the
    crystalline/amorphous conductivity ratio at ``contrast_300K``.
    """

    sigma_c0: float = 2.0e4
    Ea_c: float = 0.0
    contrast_300K: float = 1.0e4
    Ea_a: float = 0.35
    sigma_a0: float | None = None
    sigma_melt: float = 1.0e5
    E_field_scale: float = 5.0e7
    sigma_tin: float = 5.0e6

    # Seebeck coefficient pairs: value at 300 K (V/K) and slope (V/K^2).
    # The amorphous slope brings S_a down to S_c at T_melt, so S has no jump
    # when a cell melts.
    S_c: tuple[float, float] = (50e-6, 0.0)
    S_a: tuple[float, float] = (900e-6, -850e-6 / 573.0)

    # thermal conductivity pairs: value at 300 K and slope per K
    k_c: tuple[float, float] = (1.0, 0.0)
    k_a: tuple[float, float] = (0.3, 0.0)
    k_ox: tuple[float, float] = (1.4, 0.0)
    k_tin: tuple[float, float] = (12.0, 0.0)

    # GST specific heat as (T, Cp) breakpoints, linearly interpolated
    Cp: list[tuple[float, float]] = field(default_factory=lambda: [(293.0, 0.21)])
    Cp_ox: float = 0.74
    Cp_tin: float = 0.60

    dH_ac: float = 120.0
    dH_window: float = 40.0

    d: float = 6.2
    d_ox: float = 2.2
    d_tin: float = 5.4

    # crystalline faces joining cells of different grain orientation
    grain_boundary_factor: float = 0.5

    T_melt: float = 873.0
    T_glass: float = 420.0
    T_ambient: float = 293.0

    def __post_init__(self):
        if self.sigma_a0 is None:
            self.sigma_a0 = (self.sigma_c0 / self.contrast_300K) * math.exp(
                self.Ea_a / (K_B_EV * 300.0))
        self.S_c = tuple(self.S_c)
        self.S_a = tuple(self.S_a)
        self.k_c = tuple(self.k_c)
        self.k_a = tuple(self.k_a)
        self.k_ox = tuple(self.k_ox)
        self.k_tin = tuple(self.k_tin)
        self.Cp = [tuple(p) for p in self.Cp]
        for name in ("sigma_c0", "sigma_a0", "sigma_melt", "E_field_scale",
                     "sigma_tin", "Cp_ox", "Cp_tin", "d", "d_ox", "d_tin",
                     "T_melt", "T_glass", "dH_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"material parameter {name} must be positive")
        if not 0 < self.grain_boundary_factor <= 1:
            raise ValueError("grain_boundary_factor must lie in (0, 1]")

    # -- conductivity -------------------------------------------------

    def sigma_crystalline(self, T):
        T = np.asarray(T, dtype=float)
        if self.Ea_c == 0.0:
            return np.full_like(T, self.sigma_c0)
        return self.sigma_c0 * np.exp(-self.Ea_c / K_B_EV * (1.0 / T - 1.0 / 300.0))

    def sigma_amorphous(self, T, E=0.0):
        """Arrhenius amorphous conductivity with exponential field enhancement.

        Capped at the molten conductivity so the branch stays below the melt.
        """
        T = np.asarray(T, dtype=float)
        E = np.abs(np.asarray(E, dtype=float))
        with np.errstate(divide="ignore"):
            arg = -self.Ea_a / (K_B_EV * T) + E / self.E_field_scale
        return np.minimum(self.sigma_a0 * np.exp(np.minimum(arg, 50.0)), self.sigma_melt)

    def sigma(self, phase_mix, T, E=0.0, molten=False):
        _check_finite("sigma", phase_mix, T, E)
        x = np.asarray(phase_mix, dtype=float)
        T = np.asarray(T, dtype=float)
        if np.any(T < 0) or np.any(x < 0) or np.any(x > 1):
            raise ValueError("sigma: requires T >= 0 and 0 <= phase_mix <= 1")
        s = x * self.sigma_crystalline(T) + (1.0 - x) * self.sigma_amorphous(T, E)
        return np.where(molten, self.sigma_melt, s)

    # -- thermoelectric -----------------------------------------------

    def seebeck(self, phase_mix, T, E=0.0):
        """Conductance-weighted mix of the crystalline and amorphous branches."""
        _check_finite("seebeck", phase_mix, T, E)
        x = np.asarray(phase_mix, dtype=float)
        T = np.asarray(T, dtype=float)
        sc = self.S_c[0] + self.S_c[1] * (T - 300.0)
        sa = self.S_a[0] + self.S_a[1] * (T - 300.0)
        gc = x * self.sigma_crystalline(T)
        ga = (1.0 - x) * self.sigma_amorphous(T, E)
        return (gc * sc + ga * sa) / (gc + ga)

    # -- thermal ------------------------------------------------------

    def thermal_k(self, material_id, phase_mix, T):
        _check_finite("thermal_k", phase_mix, T)
        T = np.asarray(T, dtype=float)
        try:
            mat = Material(int(material_id))
        except ValueError:
            raise ValueError(f"unknown material id {material_id!r}") from None
        if mat is Material.GST:
            x = np.asarray(phase_mix, dtype=float)
            kc = self.k_c[0] + self.k_c[1] * (T - 300.0)
            ka = self.k_a[0] + self.k_a[1] * (T - 300.0)
            return x * kc + (1.0 - x) * ka
        pair = self.k_ox if mat is Material.OXIDE else self.k_tin
        return np.full_like(T, pair[0]) + pair[1] * (T - 300.0)

    def heat_capacity(self, T):
        """GST specific heat in J/(g K)."""
        _check_finite("heat_capacity", T)
        Ts, cps = zip(*self.Cp)
        return np.interp(np.asarray(T, dtype=float), Ts, cps)

    def volumetric_heat_capacity(self, material_id, T):
        """rho*Cp in J/(m^3 K) for any material."""
        mat = Material(int(material_id))
        T = np.asarray(T, dtype=float)
        if mat is Material.GST:
            return self.heat_capacity(T) * self.d * G_PER_CM3_TO_G_PER_M3
        if mat is Material.OXIDE:
            return np.full_like(T, self.Cp_ox * self.d_ox * G_PER_CM3_TO_G_PER_M3)
        return np.full_like(T, self.Cp_tin * self.d_tin * G_PER_CM3_TO_G_PER_M3)

    def latent_heat(self, T):
        """Transition enthalpy dH_ac(T) in J/g.

        Ramps linearly from zero at ``T_melt - dH_window`` to the full value at
        the melting point and stays there above it.
        """
        T = np.asarray(T, dtype=float)
        w = np.clip((T - (self.T_melt - self.dH_window)) / self.dH_window, 0.0, 1.0)
        return self.dH_ac * w

    def latent_heat_rate(self, d_crystallinity_dt, T):
        """Volumetric latent-heat source in W/m^3; positive when crystallizing."""
        _check_finite("latent_heat_rate", d_crystallinity_dt, T)
        rate = np.asarray(d_crystallinity_dt, dtype=float)
        return rate * self.latent_heat(T) * self.d * G_PER_CM3_TO_G_PER_M3

    # -- config round trip --------------------------------------------

    def to_dict(self):
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        out["Cp"] = [list(p) for p in self.Cp]
        return out

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown material fields: {sorted(unknown)}")
        return cls(**data)


def dump_tables(model: MaterialModel, T_min=293.0, T_max=1200.0, n=92) -> str:
    """CSV of sigma(T), S(T), k(T) for each GST branch."""
    T = np.linspace(T_min, T_max, n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["T_K", "sigma_c_Sm", "sigma_a_Sm", "sigma_melt_Sm", "S_c_VK", "S_a_VK",
                "k_c_WmK", "k_a_WmK", "k_ox_WmK", "k_tin_WmK", "Cp_JgK", "dH_Jg"])
    cols = [
        T,
        model.sigma(1.0, T),
        model.sigma(0.0, T),
        np.full_like(T, model.sigma_melt),
        model.seebeck(1.0, T),
        model.seebeck(0.0, T),
        model.thermal_k(Material.GST, 1.0, T),
        model.thermal_k(Material.GST, 0.0, T),
        model.thermal_k(Material.OXIDE, 0.0, T),
        model.thermal_k(Material.TIN, 0.0, T),
        model.heat_capacity(T),
        model.latent_heat(T),
    ]
    for row in zip(*cols):
        w.writerow([f"{v:.6g}" for v in row])
    return buf.getvalue()
