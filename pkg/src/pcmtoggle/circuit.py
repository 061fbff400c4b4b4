"""Access circuitry: square-law nFETs, resistors, pulse sources and the
six device ports, solved by damped Newton iteration on nodal KCL.

Two fixed topologies share the write side.  W1 is driven from V_DD through
one nFET, W2 and W3 are tied together (each through an optional series
resistor) and pulled to ground by a second nFET; both gates follow
V_write.  The read side differs:

* ``flipflop`` - R1 is fed from a low-voltage read rail through an nFET;
  R2 and R3 each reach a load resistor R_L through an nFET.  The outputs
  Q and Q' are the load-resistor voltages.
* ``mux`` - inputs X1 and X2 drive R2 and R3 through nFETs; R1 reaches
  the output resistor R through an nFET and Y is its voltage.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import ROLES

PORT_NODES = ROLES


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class NfetModel:
    V_th: float = 0.5
    beta: float = 6.06e-5
    lam: float = 0.05

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


def _nfet_forward(m: NfetModel, vgs, vds):
    """Current and (d/dvgs, d/dvds) for vds >= 0."""
    vov = vgs - m.V_th
    if vov <= 0.0:
        return 0.0, 0.0, 0.0
    clm = 1.0 + m.lam * vds
    if vds < vov:
        core = vov * vds - 0.5 * vds * vds
        return (m.beta * core * clm, m.beta * vds * clm,
                m.beta * ((vov - vds) * clm + core * m.lam))
    core = 0.5 * vov * vov
    return m.beta * core * clm, m.beta * vov * clm, m.beta * core * m.lam


def nfet_eval(m: NfetModel, vgs, vds):
    """Drain current with derivatives w.r.t. vgs and vds.

    Negative vds swaps the drain and source terminals.
    """
    if vds >= 0.0:
        return _nfet_forward(m, vgs, vds)
    # swapped: gate-to-new-source = vgs - vds, new vds = -vds
    i, gg, gd = _nfet_forward(m, vgs - vds, -vds)
    # d(-i)/dvgs = -gg ; d(-i)/dvds = -(gg*(-1) + gd*(-1))
    return -i, -gg, gg + gd


def nfet_current(m: NfetModel, V_GS, V_DS):
    return nfet_eval(m, float(V_GS), float(V_DS))[0]


@dataclass
class Pulse:
    start: float
    width: float = 5e-9
    amplitude: float = 1.0
    rise: float = 1e-9
    fall: float = 1e-9

    @property
    def end(self):
        return self.start + self.rise + self.width + self.fall

    def corners(self):
        t0 = self.start
        return (t0, t0 + self.rise, t0 + self.rise + self.width, self.end)


@dataclass
class Waveform:
    """Piecewise-linear trapezoidal pulse train on top of a constant baseline."""

    pulses: list[Pulse] = field(default_factory=list)
    baseline: float = 0.0

    def __call__(self, t):
        return waveform_eval(self, t)

    def corners(self):
        return sorted({c for p in self.pulses for c in p.corners()})

    def active(self, t):
        return any(p.start <= t < p.end for p in self.pulses)

    @classmethod
    def dc(cls, level):
        return cls([], float(level))

    def to_dict(self):
        return {"baseline": self.baseline, "pulses": [dataclasses.asdict(p) for p in self.pulses]}

    @classmethod
    def from_dict(cls, data):
        return cls([Pulse(**p) for p in data.get("pulses", [])], float(data.get("baseline", 0.0)))


def waveform_eval(w: Waveform, t):
    if t < 0:
        raise ValueError("waveform time must be non-negative")
    v = w.baseline
    for p in w.pulses:
        t0, t1, t2, t3 = p.corners()
        if t <= t0 or t >= t3:
            continue
        if t < t1:
            frac = (t - t0) / p.rise
        elif t <= t2:
            frac = 1.0
        else:
            frac = (t3 - t) / p.fall
        v += p.amplitude * frac
    return v


SOURCES = ("VDD", "V_write", "V_read", "V_rail", "X1", "X2")


@dataclass
class CircuitNetwork:
    variant: str = "flipflop"
    write_fet: NfetModel = field(default_factory=NfetModel)
    read_fet: NfetModel = field(default_factory=NfetModel)
    R_L: float = 10e3
    R_Y: float = 10e3
    R_series_W2: float = 500.0
    R_series_W3: float = 0.0
    gmin: float = 1e-12
    waveforms: dict[str, Waveform] = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in ("flipflop", "mux"):
            raise ValueError(f"unknown circuit variant {self.variant!r}")
        for name in SOURCES:
            self.waveforms.setdefault(name, Waveform())
        unknown = set(self.waveforms) - set(SOURCES)
        if unknown:
            raise ValueError(f"unknown sources {sorted(unknown)}")

    def internal_nodes(self):
        return ("NW", "Q", "QB") if self.variant == "flipflop" else ("NW", "Y")

    def elements(self):
        """(kind, nodes, value) tuples; FET nodes are (drain, gate, source)."""
        wr, rd = self.write_fet, self.read_fet
        els = [
            ("fet", ("VDD", "V_write", "W1"), wr),
            ("res", ("W2", "NW"), max(self.R_series_W2, 1.0)),
            ("res", ("W3", "NW"), max(self.R_series_W3, 1.0)),
            ("fet", ("NW", "V_write", "GND"), wr),
        ]
        if self.variant == "flipflop":
            els += [
                ("fet", ("V_rail", "V_read", "R1"), rd),
                ("fet", ("R2", "V_read", "Q"), rd),
                ("fet", ("R3", "V_read", "QB"), rd),
                ("res", ("Q", "GND"), self.R_L),
                ("res", ("QB", "GND"), self.R_L),
            ]
        else:
            els += [
                ("fet", ("X1", "V_read", "R2"), rd),
                ("fet", ("X2", "V_read", "R3"), rd),
                ("fet", ("R1", "V_read", "Y"), rd),
                ("res", ("Y", "GND"), self.R_Y),
            ]
        return els

    def source_values(self, t):
        vals = {name: waveform_eval(w, t) for name, w in self.waveforms.items()}
        vals["GND"] = 0.0
        return vals

    def corners(self):
        return sorted({c for w in self.waveforms.values() for c in w.corners()})

    def pulse_active(self, t):
        return any(w.active(t) for w in self.waveforms.values())

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["waveforms"] = {k: w.to_dict() for k, w in self.waveforms.items()}
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown circuit fields: {sorted(unknown)}")
        for key in ("write_fet", "read_fet"):
            if key in data and isinstance(data[key], dict):
                data[key] = NfetModel(**data[key])
        if "waveforms" in data:
            data["waveforms"] = {k: Waveform.from_dict(v) for k, v in data["waveforms"].items()}
        return cls(**data)


@dataclass
class OperatingPoint:
    t: float
    nodes: dict[str, float]
    port_voltages: np.ndarray
    port_currents: np.ndarray
    supply_currents: dict[str, float]
    residual: float
    iterations: int

    @property
    def supply_power(self):
        return sum(self.nodes[s] * i for s, i in self.supply_currents.items())

    @property
    def write_current(self):
        """Current delivered by the V_DD rail."""
        return self.supply_currents.get("VDD", 0.0)

    def node(self, name, default=0.0):
        return self.nodes.get(name, default)


class FixedConductanceDevice:
    """Device oracle with a constant port conductance matrix (tests, oracles)."""

    def __init__(self, Y, I_s=None):
        self.Y = np.asarray(Y, float)
        self.I_s = np.zeros(len(self.Y)) if I_s is None else np.asarray(I_s, float)

    def port_currents(self, Vp):
        return self.Y @ np.asarray(Vp, float) + self.I_s


def two_port_device(a, b, R):
    Y = np.zeros((6, 6))
    i, j = ROLES.index(a), ROLES.index(b)
    g = 1.0 / R
    Y[i, i] += g
    Y[j, j] += g
    Y[i, j] -= g
    Y[j, i] -= g
    return FixedConductanceDevice(Y)


def solve_network(network: CircuitNetwork, t, device, v0=None, tol=1e-9, max_iter=50,
                  max_step=0.5) -> OperatingPoint:
    """Newton solve of nodal KCL with the device as a linear multiport.

    ``device`` must offer ``port_currents(Vp)`` (A, positive into the device)
    and a Jacobian ``Y``.
    """
    unknown = list(PORT_NODES) + list(network.internal_nodes())
    index = {n: i for i, n in enumerate(unknown)}
    n = len(unknown)
    fixed = network.source_values(t)
    els = network.elements()
    v = np.zeros(n) if v0 is None else np.array(v0, float)
    if v.shape != (n,):
        v = np.zeros(n)

    def volt(name, v):
        return v[index[name]] if name in index else fixed[name]

    def kcl(v):
        f = np.zeros(n)
        J = np.zeros((n, n))
        supply = {}
        Vp = v[:6]
        f[:6] += device.port_currents(Vp)
        J[:6, :6] += device.Y
        for kind, nodes, val in els:
            if kind == "res":
                a, b = nodes
                g = 1.0 / val
                i = g * (volt(a, v) - volt(b, v))
                for node, sgn in ((a, 1.0), (b, -1.0)):
                    if node in index:
                        f[index[node]] += sgn * i
                        for other, s2 in ((a, 1.0), (b, -1.0)):
                            if other in index:
                                J[index[node], index[other]] += sgn * s2 * g
                    else:
                        supply[node] = supply.get(node, 0.0) + sgn * i
            else:
                d, gt, s = nodes
                vd, vg, vs = volt(d, v), volt(gt, v), volt(s, v)
                i, dg, dd = nfet_eval(val, vg - vs, vd - vs)
                # partials of drain current w.r.t. node voltages
                parts = {d: dd, gt: dg, s: -dg - dd}
                for node, sgn in ((d, 1.0), (s, -1.0)):
                    if node in index:
                        f[index[node]] += sgn * i
                        for other, p in parts.items():
                            if other in index:
                                J[index[node], index[other]] += sgn * p
                    else:
                        supply[node] = supply.get(node, 0.0) + sgn * i
        f += network.gmin * v
        J[np.diag_indices(n)] += network.gmin
        return f, J, supply

    it = 0
    f, J, supply = kcl(v)
    res = np.abs(f).max()
    while res >= tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"circuit Newton did not converge in {max_iter} iterations (residual {res:.3g} A)", res)
        dv = np.linalg.solve(J, -f)
        big = np.abs(dv).max()
        if big > max_step:
            dv *= max_step / big
        v = v + dv
        it += 1
        f, J, supply = kcl(v)
        res = np.abs(f).max()

    nodes = dict(fixed)
    nodes.update({name: float(v[i]) for name, i in index.items()})
    supply.pop("GND", None)
    return OperatingPoint(t=t, nodes=nodes, port_voltages=v[:6].copy(),
                          port_currents=np.asarray(device.port_currents(v[:6])),
                          supply_currents=supply, residual=float(res), iterations=it)
