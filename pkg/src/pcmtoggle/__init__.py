"""2D electrothermal simulator for six-contact phase-change toggle devices."""

from .circuit import CircuitNetwork, NfetModel, Pulse, Waveform, nfet_current, solve_network, waveform_eval
from .engine import EngineConfig, Event, Schedule, Simulation, SimulationAbort, detect_winner
from .geometry import DeviceGeometry, Grid, build_grid
from .materials import Material, MaterialModel
from .phase import CDField, PhaseRates, crystallinity_along_path, init_grain_map, rate_step

__version__ = "0.1.0"

__all__ = [
    "CDField", "CircuitNetwork", "DeviceGeometry", "EngineConfig", "Event", "Grid", "Material",
    "MaterialModel", "NfetModel", "PhaseRates", "Pulse", "Schedule", "Simulation", "SimulationAbort",
    "Waveform", "build_grid", "crystallinity_along_path", "detect_winner", "init_grain_map",
    "nfet_current", "rate_step", "solve_network", "waveform_eval",
]
