"""Structured run configuration.

A config is one JSON document with the sections ``materials``, ``geometry``,
``phase``, ``circuit``, ``engine``, ``experiment`` and ``acceptance``.  Every
section is optional; missing keys take the defaults below.  The named
presets ``depth20``, ``depth10`` and ``depth5`` carry the per-thickness
supply settings and can be selected with ``"preset"`` at the top level.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .circuit import CircuitNetwork, NfetModel, Waveform
from .engine import EngineConfig
from .geometry import DeviceGeometry, build_grid
from .materials import MaterialModel
from .phase import PhaseRates

SECTIONS = ("materials", "geometry", "phase", "circuit", "engine", "experiment", "acceptance")

EXPERIMENTS = ("initialize", "toggle-flipflop", "toggle-mux", "rl-sweep", "read-contrast",
               "scaling", "min-amorph-time", "failure-anneal")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``where`` names the field."""

    def __init__(self, message, where=""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# -- calibrated defaults ----------------------------------------------------

# weak crystalline activation so a hotter path conducts better (thermal runaway)
DEFAULT_MATERIALS = {"Ea_c": 0.05}

DEFAULT_GEOMETRY = {"contact_center_radius": 25e-9}

DEFAULT_PHASE = {"T_peak": 780.0}

# gate drive equals V_DD; the peak write voltage and the supply are the same level
DEFAULT_CIRCUIT = {
    "VDD": 3.0,
    "V_rail": 0.5,
    "V_in": 0.5,
    "R_L": 10e3,
    "R_Y": 10e3,
    "R_series_W2": 300.0,
    "R_series_W3": 0.0,
    "write_fet": {"V_th": 0.5, "beta": 3.3e-4, "lam": 0.05},
    "read_fet": {"V_th": 0.5, "beta": 3.3e-4, "lam": 0.05},
}

# at the 1 ps floor, accept steps up to these bounds and log them instead of aborting
DEFAULT_ENGINE = {"dT_hard": 200.0, "dcd_hard": 1.0}


@dataclass
class ExperimentSettings:
    """Timing and sweep lists shared by the experiment definitions."""

    seed: int = 0
    grid_h: float = 2e-9
    write_width: float = 5e-9
    rise: float = 1e-9
    fall: float = 1e-9
    # write-to-write spacing; the device needs ~50 ns to thermalize
    write_period: float = 60e-9
    first_read_delay: float = 5e-9
    read_spacing: float = 10e-9
    n_reads: int = 5
    read_width: float = 5e-9
    n_pulses: int = 4
    depths: list = field(default_factory=lambda: [20e-9, 10e-9, 5e-9])
    R_L_values: list = field(default_factory=lambda: [1e3, 3e3, 10e3, 30e3, 100e3])
    radii: list = field(default_factory=lambda: [25e-9, 35e-9])
    width_lo: float = 0.5e-9
    width_hi: float = 20e-9
    width_resolution: float = 0.5e-9
    failure_width: float = 20e-9
    anneal_gate: float = 2.3
    anneal_width: float = 30e-9
    cooldown: float = 100e-9
    workers: int = 1


# Acceptance bands are data.  Each entry names the quantity, the band and the
# published reference value for the record.
DEFAULT_ACCEPTANCE = {
    "init_winner": {"expected": "W1-3", "winner_below": 0.05, "loser_above": 0.9},
    "toggle": {"min_pulses": 4, "read_disturb_max": 0.01},
    "read_contrast": {"early_min": 5.0, "stable_min": 30.0, "stable_within_ns": 100.0,
                      "ref_early": 10.0, "ref_stable": 60.0, "ref_stable_after_ns": 40.0},
    "rl_sweep": {"V_high_increasing": True, "ratio_decreasing": True},
    "mux": {"rows_required": 8, "threshold_fraction": 0.5},
    "scaling": {"I10_over_I20": [0.35, 0.70], "I5_over_I20": [0.15, 0.45],
                "P5_over_P20": [0.08, 0.35],
                "ref_I_uA": [193.0, 101.0, 56.0], "ref_P_uW": [585.0, 222.0, 92.0],
                "ref_E_pJ": [2.9, 1.1, 0.46]},
    "min_amorph_time": {"range_ns": [2.0, 12.0], "ref_ns": {"25": 5.0, "35": 6.0}},
    "thermalization": {"within_K": 1.0, "within_ns": 100.0},
    "energy_audit": {"max_relative_residual": 1e-3},
}

PRESETS = {
    "depth20": {"geometry": {"out_of_plane_depth": 20e-9}, "circuit": {"VDD": 3.0}},
    "depth10": {"geometry": {"out_of_plane_depth": 10e-9}, "circuit": {"VDD": 2.2}},
    "depth5": {"geometry": {"out_of_plane_depth": 5e-9}, "circuit": {"VDD": 1.65}},
}

DEPTH_PRESET = {20e-9: "depth20", 10e-9: "depth10", 5e-9: "depth5"}


def defaults():
    return {
        "materials": copy.deepcopy(DEFAULT_MATERIALS),
        "geometry": copy.deepcopy(DEFAULT_GEOMETRY),
        "phase": copy.deepcopy(DEFAULT_PHASE),
        "circuit": copy.deepcopy(DEFAULT_CIRCUIT),
        "engine": copy.deepcopy(DEFAULT_ENGINE),
        "experiment": dataclasses.asdict(ExperimentSettings()),
        "acceptance": copy.deepcopy(DEFAULT_ACCEPTANCE),
    }


def merge(base, over, where=""):
    """Recursive dict merge; ``over`` wins, nested dicts merge key by key."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v, f"{where}.{k}" if where else k)
        else:
            out[k] = copy.deepcopy(v)
    return out


# -- the resolved config ----------------------------------------------------

@dataclass
class RunConfig:
    """Fully resolved configuration with typed sections."""

    raw: dict
    materials: MaterialModel
    geometry: DeviceGeometry
    phase: PhaseRates
    circuit: dict
    engine: EngineConfig
    experiment: ExperimentSettings
    acceptance: dict

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def with_overrides(self, over: dict) -> RunConfig:
        return resolve(merge(self.raw, over))

    def with_preset(self, name) -> RunConfig:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}", "preset")
        return self.with_overrides(PRESETS[name])

    @property
    def seed(self):
        return self.experiment.seed

    def grid(self):
        return build_grid(self.geometry, h=self.experiment.grid_h,
                          T_boundary=self.materials.T_ambient)

    def network(self, variant="flipflop", R_L=None) -> CircuitNetwork:
        c = self.circuit
        net = CircuitNetwork(
            variant=variant,
            write_fet=NfetModel(**c["write_fet"]),
            read_fet=NfetModel(**c["read_fet"]),
            R_L=c["R_L"] if R_L is None else R_L,
            R_Y=c["R_Y"],
            R_series_W2=c["R_series_W2"],
            R_series_W3=c["R_series_W3"],
        )
        net.waveforms["VDD"] = Waveform.dc(c["VDD"])
        net.waveforms["V_rail"] = Waveform.dc(c["V_rail"])
        return net


_CIRCUIT_KEYS = set(DEFAULT_CIRCUIT)


def _typed(section, fn, data):
    try:
        return fn(data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), section) from None


def _check_types(section, data, reference):
    for k, v in data.items():
        if k not in reference:
            raise ConfigError(f"unknown field {k!r}", f"{section}")
        ref = reference[k]
        if isinstance(ref, bool):
            ok = isinstance(v, bool)
        elif isinstance(ref, (int, float)) and ref is not None:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        elif isinstance(ref, list):
            ok = isinstance(v, list)
        elif isinstance(ref, dict):
            ok = isinstance(v, dict)
        else:
            ok = True
        if not ok:
            raise ConfigError(f"expected {type(ref).__name__}, got {type(v).__name__}", f"{section}.{k}")


def resolve(raw: dict) -> RunConfig:
    """Validate a merged config dict and build the typed sections."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = copy.deepcopy(raw)
    preset = raw.pop("preset", None)
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}", "config")
    for s in SECTIONS:
        if s in raw and not isinstance(raw[s], dict):
            raise ConfigError("section must be an object", s)
    full = merge(defaults(), raw)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "preset")
        full = merge(full, PRESETS[preset])

    circ = full["circuit"]
    _check_types("circuit", circ, DEFAULT_CIRCUIT)
    for fet in ("write_fet", "read_fet"):
        _typed(f"circuit.{fet}", lambda d: NfetModel(**d), circ[fet])
    _check_types("experiment", full["experiment"], dataclasses.asdict(ExperimentSettings()))

    mats = _typed("materials", MaterialModel.from_dict, full["materials"])
    geo = _typed("geometry", DeviceGeometry.from_dict, full["geometry"])
    phase = _typed("phase", PhaseRates.from_dict, full["phase"])
    eng = _typed("engine", EngineConfig.from_dict, full["engine"])
    exp = _typed("experiment", lambda d: ExperimentSettings(**d), full["experiment"])
    if exp.n_pulses < 2:
        raise ConfigError("n_pulses must be at least 2", "experiment.n_pulses")
    try:
        geo.validate()
    except ValueError as exc:
        raise ConfigError(str(exc), "geometry") from None
    return RunConfig(raw=full, materials=mats, geometry=geo, phase=phase, circuit=circ,
                     engine=eng, experiment=exp, acceptance=full["acceptance"])


def load(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config file (or defaults when ``path`` is None)."""
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})",
                              str(path)) from None
    if overrides:
        raw = merge(raw, overrides)
    return resolve(raw)


def dump(cfg: RunConfig) -> str:
    return json.dumps(cfg.raw, indent=2, sort_keys=True)
