"""Coupled time stepping: circuit + potential, heat, crystal density.

One step is split as (1) device/circuit operating point with temperature and
CD frozen, iterating the field-dependent conductivity to a fixed point,
(2) an implicit heat step with Joule and thermoelectric sources, (3) the CD
rate update at the new temperature, followed by the latent-heat correction
of the cells that changed phase.

Step sizes are binary fractions of ``dt_base`` and time is kept as an
integer tick count, so pulse corners are hit exactly and a given config
always produces the same sequence of steps.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fields as fl
from .circuit import CircuitNetwork, OperatingPoint, Pulse, Waveform, solve_network
from .geometry import ROLES, Grid
from .materials import G_PER_CM3_TO_G_PER_M3, MaterialModel
from .phase import CDField, PhaseRates, crystallinity_along_path, init_grain_map, rate_step

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t_ns", "I_W1W2_uA", "I_W1W3_uA", "Q_V", "Qbar_V", "Y_V", "P_uW", "E_pJ", "event",
                 "I_write_uA", "V_W1_V", "T_max_K", "n_molten", "dt_ps", "flag")

AMORPHOUS_BELOW = 0.05
# a write corridor counts as molten when at least this fraction of its cells is
MOLTEN_PATH_FRACTION = 0.5
BOTH_MELTED = "both-melted"


class SimulationAbort(RuntimeError):
    """dt fell below the floor; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass
class EngineConfig:
    dt_base: float = 0.512e-9
    max_level: int = 9
    dt_floor: float = 1e-12
    dt_pulse_max: float = 0.1e-9
    dT_max: float = 25.0
    dcd_max: float = 0.2
    # steps at the finest level are still accepted up to these hard bounds
    dT_hard: float = 25.0
    dcd_hard: float = 0.2
    fp_max_iter: int = 8
    fp_tol: float = 1e-4
    n_grains: int = 8
    audit: bool = True

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown engine fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Event:
    kind: str  # write | read | anneal
    start: float
    width: float = 5e-9
    label: str = ""
    X1: int = 0
    X2: int = 0
    amplitude: float | None = None
    rise: float = 1e-9
    fall: float = 1e-9

    @property
    def end(self):
        return self.start + self.rise + self.width + self.fall


@dataclass
class Schedule:
    """Ordered pulse events; builds the source waveforms of a network."""

    events: list[Event] = field(default_factory=list)
    snapshots: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.events.sort(key=lambda e: e.start)
        for e in self.events:
            if e.kind not in ("write", "read", "anneal"):
                raise ValueError(f"unknown event kind {e.kind!r}")
            if e.width <= 0 or e.start < 0:
                raise ValueError("events need start >= 0 and positive width")
        drive = [e for e in self.events if e.kind in ("write", "anneal")]
        for a, b in zip(drive, drive[1:]):
            if b.start < a.end:
                raise ValueError(f"write events {a.label!r} and {b.label!r} overlap")
        reads = [e for e in self.events if e.kind == "read"]
        for a, b in zip(reads, reads[1:]):
            if b.start < a.end:
                raise ValueError(f"read events {a.label!r} and {b.label!r} overlap")

    @property
    def end(self):
        return max((e.end for e in self.events), default=0.0)

    def label_at(self, t):
        for e in self.events:
            if e.start <= t < e.end:
                return e.label or e.kind
        return ""

    def apply(self, network: CircuitNetwork, V_gate: float, V_in: float = 0.5):
        """Fill V_write, V_read, X1, X2 from the events (VDD and V_rail untouched)."""
        wf = {k: Waveform() for k in ("V_write", "V_read", "X1", "X2")}
        for e in self.events:
            mk = lambda amp: Pulse(e.start, e.width, amp, e.rise, e.fall)  # noqa: E731
            if e.kind in ("write", "anneal"):
                wf["V_write"].pulses.append(mk(V_gate if e.amplitude is None else e.amplitude))
            else:
                wf["V_read"].pulses.append(mk(V_gate if e.amplitude is None else e.amplitude))
                if e.X1:
                    wf["X1"].pulses.append(mk(V_in))
                if e.X2:
                    wf["X2"].pulses.append(mk(V_in))
        network.waveforms.update(wf)


@dataclass
class Snapshot:
    t: float
    cd1: np.ndarray
    cd2: np.ndarray
    T: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def crystallinity(self):
        return self.cd1 + self.cd2


@dataclass
class WinnerResult:
    path: str | None
    c12: float
    c13: float

    @property
    def ambiguous(self):
        return self.path in ("both", "none")


def detect_winner(cd: CDField, grid: Grid, threshold=AMORPHOUS_BELOW) -> WinnerResult:
    """Which write path is blocked by amorphous material.

    ``path`` is ``"W1-2"`` or ``"W1-3"``; ``"both"`` and ``"none"`` are the
    explicit ambiguous outcomes.
    """
    c12 = crystallinity_along_path(cd, grid, "W1", "W2")
    c13 = crystallinity_along_path(cd, grid, "W1", "W3")
    a12, a13 = c12 < threshold, c13 < threshold
    if a12 and a13:
        path = "both"
    elif a12:
        path = "W1-2"
    elif a13:
        path = "W1-3"
    else:
        path = "none"
    return WinnerResult(path, c12, c13)


def grain_boundary_factor(problem: fl.ElectricalProblem, cd: CDField, molten, gb: float):
    """Face conductance multiplier for crystalline faces between grains of
    different orientation."""
    if gb >= 1.0:
        return None
    dom = problem.gather(cd.dominant())
    x = problem.gather(cd.crystallinity)
    m = problem.gather(molten)
    a, b = problem.fa, problem.fb
    differ = (dom[a] != dom[b]) & (dom[a] > 0) & (dom[b] > 0) & ~m[a] & ~m[b]
    return np.where(differ, 1.0 - (1.0 - gb) * np.minimum(x[a], x[b]), 1.0)


@dataclass
class StepResult:
    dt: float
    op: OperatingPoint
    balance: fl.EnergyBalance
    dT: float
    dcd: float


class Simulation:
    """Owns one device state and advances it through a schedule."""

    def __init__(self, grid: Grid, materials: MaterialModel | None = None,
                 rates: PhaseRates | None = None, network: CircuitNetwork | None = None,
                 config: EngineConfig | None = None, seed: int = 0, cd: CDField | None = None):
        self.grid = grid
        self.materials = materials or MaterialModel()
        m = self.materials
        self.rates = dataclasses.replace(rates or PhaseRates(), T_glass=m.T_glass,
                                         T_melt=m.T_melt, rng_seed=seed)
        self.network = network or CircuitNetwork()
        self.config = config or EngineConfig()
        self.seed = seed
        self.problem = fl.ElectricalProblem(grid)
        self.cd = cd.copy() if cd is not None else init_grain_map(grid, seed, self.config.n_grains)
        self.T = np.full(grid.shape, grid.T_boundary)
        self.E = np.zeros(grid.shape)
        self.ticks = 0
        self.step_index = 0
        self.level = 0
        self.op_vector = None
        self.last_op: OperatingPoint | None = None
        self.last_solution: fl.ElectricalSolution | None = None
        self.energy = 0.0
        self.audits: list[float] = []
        self.floor_violations: list[tuple[float, float, float]] = []
        self.accepted_dts: list[float] = []
        cfg = self.config
        self.tick = cfg.dt_base / (1 << cfg.max_level)
        if self.tick < cfg.dt_floor * (1 - 1e-9):
            raise ValueError("finest step level falls below the dt floor")
        k_ref, cap_ref = fl.material_fields(grid, m, np.ones(grid.shape), self.T)
        self.thermal = fl.shared_thermal_solver(grid, k_ref, cap_ref, grid.gst)
        self._corridors = {o: grid.corridor_cells("W1", o) for o in ("W2", "W3")}

    # -- time -----------------------------------------------------------

    @property
    def t(self):
        return self.ticks * self.tick

    def _to_ticks(self, t):
        return int(round(t / self.tick))

    # -- properties -----------------------------------------------------

    def molten(self, T=None):
        T = self.T if T is None else T
        return self.grid.gst & (T > self.materials.T_melt)

    def sigma_field(self, T=None, E=None, cd=None):
        T = self.T if T is None else T
        E = self.E if E is None else E
        cd = self.cd if cd is None else cd
        gst = self.grid.gst
        sig = np.zeros(self.grid.shape)
        sig[gst] = self.materials.sigma(np.clip(cd.crystallinity[gst], 0, 1), T[gst], E[gst],
                                        T[gst] > self.materials.T_melt)
        return sig

    def seebeck_field(self, T=None, E=None):
        T = self.T if T is None else T
        E = self.E if E is None else E
        gst = self.grid.gst
        S = np.zeros(self.grid.shape)
        x = np.clip(self.cd.crystallinity[gst], 0, 1)
        S[gst] = np.where(T[gst] > self.materials.T_melt, self.materials.seebeck(1.0, T[gst]),
                          self.materials.seebeck(x, T[gst], E[gst]))
        return S

    def _conductance(self, sigma):
        gbf = grain_boundary_factor(self.problem, self.cd, self.molten(),
                                    self.materials.grain_boundary_factor)
        return fl.factor_conductance(self.problem, sigma, gbf)

    # -- operating point --------------------------------------------------

    def operating_point(self, t=None):
        """Circuit + device solution at frozen T and CD, iterating sigma(E)."""
        t = self.t if t is None else t
        E = self.E
        S = self.seebeck_field()
        prev = None
        for _ in range(self.config.fp_max_iter):
            sigma = self.sigma_field(E=E)
            mp = self._conductance(sigma).multiport(S, self.T)
            op = solve_network(self.network, t, mp, self.op_vector)
            self.op_vector = np.concatenate([op.port_voltages, [op.nodes[n] for n in self.network.internal_nodes()]])
            sol = mp.solution(op.port_voltages)
            # under-relax after the first pass; the field enhancement is exponential
            E = sol.E_mag if prev is None else 0.5 * (E + sol.E_mag)
            cur = op.port_currents
            if prev is not None:
                scale = max(np.abs(cur).max(), 1e-12)
                if np.abs(cur - prev).max() / scale < self.config.fp_tol:
                    break
            prev = cur
        else:
            log.warning("sigma(E) fixed point not converged at t=%.4g ns", t * 1e9)
        return op, sol, E

    # -- stepping ---------------------------------------------------------

    def _attempt(self, dt):
        m = self.materials
        grid = self.grid
        gst = grid.gst
        op, sol, E = self.operating_point(self.t + dt)
        x = self.cd.crystallinity
        k, cap = fl.material_fields(grid, m, x, self.T)
        q = sol.joule + sol.thomson
        T_star, info = self.thermal.step(self.T, dt, q, k, cap)

        limit = np.zeros(grid.shape)
        hot = gst & (T_star > m.T_melt)
        if hot.any():
            lat = m.latent_heat(T_star[hot]) * m.d * G_PER_CM3_TO_G_PER_M3
            limit[hot] = cap[hot] * (T_star[hot] - m.T_melt) / lat
        cd_new, rate = rate_step(self.cd, T_star, dt, self.rates, self.step_index, melt_limit=limit)
        QH = np.zeros(grid.shape)
        QH[gst] = m.latent_heat_rate(rate[gst], T_star[gst])
        T_new = T_star + QH * dt / cap

        depth = grid.depth
        h2 = grid.h * grid.h
        balance = fl.EnergyBalance(
            stored=float(np.sum(cap * (T_new - self.T))) * h2 * depth,
            electrical_in=sol.power_in * dt,
            latent=float(np.sum(QH)) * h2 * depth * dt,
            boundary=info.boundary_heat * depth * dt)
        dT = float(np.abs(T_new - self.T).max())
        dcd = float(np.abs(cd_new.crystallinity - x).max())
        return T_new, cd_new, E, op, sol, balance, dT, dcd

    def _max_level_ticks(self, level):
        return 1 << (self.config.max_level - level)

    def _next_corner_ticks(self, corners):
        for c in corners:
            if c > self.ticks:
                return c
        return None

    def step(self, dt_max=None, corners=()):
        """Advance one accepted step; returns the StepResult."""
        cfg = self.config
        active = self.network.pulse_active(self.t)
        cap = cfg.dt_pulse_max if active else cfg.dt_base
        if dt_max is not None:
            cap = min(cap, dt_max)
        level = self.level
        while level < cfg.max_level and self._max_level_ticks(level) * self.tick > cap * (1 + 1e-9):
            level += 1
        nxt = self._next_corner_ticks(corners)
        while level < cfg.max_level and nxt is not None and self.ticks + self._max_level_ticks(level) > nxt:
            level += 1
        while True:
            n = self._max_level_ticks(level)
            dt = n * self.tick
            T_new, cd_new, E, op, sol, bal, dT, dcd = self._attempt(dt)
            if dT <= cfg.dT_max and dcd <= cfg.dcd_max:
                break
            if level >= cfg.max_level:
                if dT <= cfg.dT_hard and dcd <= cfg.dcd_hard:
                    self.floor_violations.append((self.t, dT, dcd))
                    break
                snap = self.snapshot()
                raise SimulationAbort(
                    f"step size underflow at t={self.t * 1e9:.4f} ns (dT={dT:.1f} K, dCD={dcd:.3f})", snap)
            level += 1

        self.T = T_new
        self.cd = cd_new
        self.E = E
        self.ticks += n
        self.step_index += 1
        self.last_op = op
        self.last_solution = sol
        self.energy += op.supply_power * dt
        self.accepted_dts.append(dt)
        if cfg.audit:
            self.audits.append(bal.relative_residual)
        if dT < 0.5 * cfg.dT_max and dcd < 0.5 * cfg.dcd_max:
            level = max(level - 1, 0)
        self.level = level
        return StepResult(dt, op, bal, dT, dcd)

    # -- running --------------------------------------------------------

    def snapshot(self) -> Snapshot:
        V = self.last_solution.V.copy() if self.last_solution is not None else np.zeros(self.grid.shape)
        return Snapshot(self.t, self.cd.cd1.copy(), self.cd.cd2.copy(), self.T.copy(),
                        self.sigma_field(), V)

    def trace_row(self, res: StepResult, label):
        op = res.op
        i12 = -op.port_currents[ROLES.index("W2")]
        i13 = -op.port_currents[ROLES.index("W3")]
        return {
            "t_ns": self.t * 1e9,
            "I_W1W2_uA": i12 * 1e6,
            "I_W1W3_uA": i13 * 1e6,
            "Q_V": op.node("Q"),
            "Qbar_V": op.node("QB"),
            "Y_V": op.node("Y"),
            "P_uW": op.supply_power * 1e6,
            "E_pJ": self.energy * 1e12,
            "event": label,
            "I_write_uA": op.write_current * 1e6,
            "V_W1_V": float(op.port_voltages[ROLES.index("W1")]),
            "T_max_K": float(self.T.max()),
            "n_molten": int(self.molten().sum()),
            "dt_ps": res.dt * 1e12,
            "flag": BOTH_MELTED if self.both_melted() else "",
        }

    def run(self, schedule: Schedule, t_end=None, callback=None):
        """Advance to ``t_end`` (default: end of schedule); returns trace rows and snapshots."""
        t_end = schedule.end if t_end is None else t_end
        corner_times = set(self.network.corners()) | set(schedule.snapshots) | {t_end}
        corners = sorted({self._to_ticks(c) for c in corner_times})
        snap_ticks = {self._to_ticks(s): s for s in schedule.snapshots}
        end_ticks = self._to_ticks(t_end)
        rows = []
        snaps = {}
        if self.ticks in snap_ticks:
            snaps[snap_ticks[self.ticks]] = self.snapshot()
        while self.ticks < end_ticks:
            label = schedule.label_at(self.t)
            try:
                res = self.step(corners=corners)
            except SimulationAbort as exc:
                raise SimulationAbort(f"{exc} [during {label or 'idle'}]", exc.snapshot) from exc
            except fl.SolverError as exc:
                raise fl.SolverError(f"{exc} [during {label or 'idle'}]") from exc
            rows.append(self.trace_row(res, label))
            if self.ticks in snap_ticks:
                snaps[snap_ticks[self.ticks]] = self.snapshot()
            if callback is not None:
                callback(self, res)
        return rows, snaps

    def molten_paths(self):
        """Molten fraction of the W1-W2 and W1-W3 corridors."""
        out = []
        for other in ("W2", "W3"):
            jj, ii = self._corridors[other]
            out.append(float(self.molten()[jj, ii].mean()) if jj.size else 0.0)
        return tuple(out)

    def both_melted(self):
        return min(self.molten_paths()) >= MOLTEN_PATH_FRACTION

    def winner(self) -> WinnerResult:
        return detect_winner(self.cd, self.grid)


def trace_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRACE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.9g}" if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
