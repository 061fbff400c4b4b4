"""Cell-centred finite-volume solvers for current continuity and heat flow.

Electrical: only GST cells carry unknowns.  TiN contacts are equipotential
ports attached to their neighbouring GST cells through a half-cell
conductance; oxide is insulating.  Flux across a face is

    I_ab = G_ab * ((V_a - V_b) + S_ab * (T_a - T_b))

which is the discrete form of J = -sigma grad V - sigma S grad T.  All
conductances carry the out-of-plane depth.

Thermal: backward Euler over the whole grid with Dirichlet outer edges.
The oxide/TiN part of the operator never changes, so for each time-step
size its factorization is cached and the varying GST block is solved
through a Schur complement.
"""

from __future__ import annotations

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage
from scipy.sparse.csgraph import connected_components

from .geometry import ROLES, Grid
from .materials import Material

log = logging.getLogger(__name__)

N_PORTS = len(ROLES)
LEAK_CONDUCTANCE = 1e-15


class SolverError(RuntimeError):
    pass


def _splu(A):
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                     options=dict(SymmetricMode=True))


# ---------------------------------------------------------------------------
# electrical


class ElectricalProblem:
    """Face connectivity of the GST cells and their contact ports."""

    def __init__(self, grid: Grid):
        self.grid = grid
        gst = grid.gst
        self.cells = np.flatnonzero(gst)
        self.n = self.cells.size
        pos = np.full(gst.size, -1, dtype=np.int64)
        pos[self.cells] = np.arange(self.n)
        self.pos = pos
        ny, nx = grid.shape
        flat = np.arange(gst.size).reshape(ny, nx)

        jj, ii = np.nonzero(gst)
        src_all = flat[jj, ii]
        a_list, b_list, axis_list = [], [], []
        pa, pp, pt, pdir = [], [], [], []
        # direction codes 0:-x 1:+x 2:-y 3:+y
        for dj, di, code in ((0, -1, 0), (0, 1, 1), (-1, 0, 2), (1, 0, 3)):
            nj, ni = jj + dj, ii + di
            ok = (nj >= 0) & (nj < ny) & (ni >= 0) & (ni < nx)
            src, dst = src_all[ok], flat[nj[ok], ni[ok]]
            if code in (1, 3):
                gg = gst.ravel()[dst]
                a_list.append(pos[src[gg]])
                b_list.append(pos[dst[gg]])
                axis_list.append(np.full(int(gg.sum()), code // 2))
            cid = grid.contact.ravel()[dst]
            pm = cid >= 0
            pa.append(pos[src[pm]])
            pp.append(cid[pm].astype(np.int64))
            pt.append(dst[pm])
            pdir.append(np.full(int(pm.sum()), code))
        self.fa = np.concatenate(a_list)
        self.fb = np.concatenate(b_list)
        self.faxis = np.concatenate(axis_list)
        self.pa = np.concatenate(pa)
        self.pp = np.concatenate(pp)
        self.pt = np.concatenate(pt)
        self.pdir = np.concatenate(pdir)
        if not set(self.pp.tolist()) == set(range(N_PORTS)):
            raise SolverError("every contact must touch at least one GST cell")

        graph = sp.coo_matrix((np.ones(self.fa.size), (self.fa, self.fb)), shape=(self.n, self.n))
        ncomp, labels = connected_components(graph, directed=False)
        anchored = np.zeros(ncomp, bool)
        anchored[labels[self.pa]] = True
        self.leak = ~anchored[labels]
        if self.leak.any():
            log.warning("%d GST cells form floating islands; grounded through leak conductance",
                        int(self.leak.sum()))

    def gather(self, field):
        return np.asarray(field).ravel()[self.cells]


@dataclass
class ElectricalSolution:
    V: np.ndarray
    port_voltages: np.ndarray
    port_currents: np.ndarray
    E_mag: np.ndarray
    face_current: np.ndarray
    port_face_current: np.ndarray
    joule: np.ndarray
    thomson: np.ndarray

    @property
    def power_in(self):
        return float(np.dot(self.port_voltages, self.port_currents))


@dataclass
class Multiport:
    """Linear port model of the device with sigma, S and T frozen.

    Port currents (positive into the device) are ``Y @ V + I_s``.
    """

    problem: ElectricalProblem
    Y: np.ndarray
    I_s: np.ndarray
    phi: np.ndarray
    phi_s: np.ndarray
    G: np.ndarray
    Gp: np.ndarray
    S_face: np.ndarray
    S_cell: np.ndarray
    T_cell: np.ndarray
    T_port: np.ndarray
    sigma: np.ndarray = field(repr=False)

    def port_currents(self, Vp):
        return self.Y @ np.asarray(Vp, float) + self.I_s

    def solution(self, Vp) -> ElectricalSolution:
        pr = self.problem
        grid = pr.grid
        Vp = np.asarray(Vp, float)
        Vc = self.phi @ Vp + self.phi_s
        dV = Vc[pr.fa] - Vc[pr.fb]
        dT = self.T_cell[pr.fa] - self.T_cell[pr.fb]
        I = self.G * (dV + self.S_face * dT)
        dVp = Vc[pr.pa] - Vp[pr.pp]
        Ip = self.Gp * (dVp + self.S_cell[pr.pa] * (self.T_cell[pr.pa] - self.T_port))
        port_I = -np.bincount(pr.pp, weights=Ip, minlength=N_PORTS)

        vol = grid.h * grid.h * grid.depth
        n = pr.n
        joule = 0.5 * np.bincount(pr.fa, I * dV, n) + 0.5 * np.bincount(pr.fb, I * dV, n)
        joule += np.bincount(pr.pa, Ip * dVp, n)

        ST = self.S_cell * self.T_cell
        F = I * np.where(I > 0, ST[pr.fa], ST[pr.fb])
        th = -np.bincount(pr.fa, F, n) + np.bincount(pr.fb, F, n)
        Fp = np.where(Ip > 0, Ip * ST[pr.pa], 0.0)
        th -= np.bincount(pr.pa, Fp, n)

        shape = grid.shape
        joule_f = np.zeros(grid.material.size)
        joule_f[pr.cells] = joule / vol
        thomson_f = np.zeros(grid.material.size)
        thomson_f[pr.cells] = th / vol
        np.add.at(thomson_f, pr.pt, Fp / vol)

        # cell field from signed face fields, insulating faces count as zero
        h = grid.h
        ex = np.zeros(n)
        ey = np.zeros(n)
        ef = dV / h
        for arr, ax in ((ex, 0), (ey, 1)):
            sel = pr.faxis == ax
            arr += 0.5 * np.bincount(pr.fa[sel], ef[sel], n) + 0.5 * np.bincount(pr.fb[sel], ef[sel], n)
        ep = dVp / (0.5 * h)
        for arr, lo, hi in ((ex, 0, 1), (ey, 2, 3)):
            s_hi = pr.pdir == hi
            s_lo = pr.pdir == lo
            arr += 0.5 * np.bincount(pr.pa[s_hi], ep[s_hi], n)
            arr -= 0.5 * np.bincount(pr.pa[s_lo], ep[s_lo], n)
        E = np.zeros(grid.material.size)
        E[pr.cells] = np.hypot(ex, ey)

        Vf = np.zeros(grid.material.size)
        Vf[pr.cells] = Vc
        cflat = grid.contact.ravel()
        has = cflat >= 0
        Vf[has] = Vp[cflat[has]]
        return ElectricalSolution(
            V=Vf.reshape(shape), port_voltages=Vp.copy(), port_currents=port_I,
            E_mag=E.reshape(shape), face_current=I, port_face_current=Ip,
            joule=joule_f.reshape(shape), thomson=thomson_f.reshape(shape))


def _face_seebeck(sig_a, sig_b, S_a, S_b):
    return (sig_a * S_a + sig_b * S_b) / (sig_a + sig_b)


@dataclass
class ConductanceFactor:
    """Sigma-dependent part of the multiport: factorization and unit-port fields."""

    problem: ElectricalProblem
    sigma: np.ndarray
    G: np.ndarray
    Gp: np.ndarray
    lu: object = field(repr=False)
    phi: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)

    def multiport(self, S, T) -> Multiport:
        """Attach the thermoelectric drive for the given Seebeck and temperature fields."""
        pr = self.problem
        n = pr.n
        sig = self.sigma
        fa, fb = pr.fa, pr.fb
        Sc = pr.gather(S) if S is not None else np.zeros(n)
        Tflat = np.asarray(T, float).ravel()
        Tc = Tflat[pr.cells]
        Tp = Tflat[pr.pt]
        S_face = _face_seebeck(sig[fa], sig[fb], Sc[fa], Sc[fb])
        G, Gp = self.G, self.Gp
        dT = Tc[fa] - Tc[fb]
        src = -np.bincount(fa, G * S_face * dT, n) + np.bincount(fb, G * S_face * dT, n)
        src -= np.bincount(pr.pa, Gp * Sc[pr.pa] * (Tc[pr.pa] - Tp), n)
        if np.any(src):
            phi_s = self.lu.solve(src)
        else:
            phi_s = np.zeros(n)
        I_s = -np.bincount(pr.pp, Gp * phi_s[pr.pa], N_PORTS)
        I_s -= np.bincount(pr.pp, Gp * Sc[pr.pa] * (Tc[pr.pa] - Tp), N_PORTS)
        return Multiport(pr, self.Y, I_s, self.phi, phi_s, G, Gp, S_face, Sc, Tc, Tp, sig)


def factor_conductance(problem: ElectricalProblem, sigma, face_factor=None) -> ConductanceFactor:
    """Factor the GST conductance matrix and solve the six unit-port problems."""
    grid = problem.grid
    sig = problem.gather(sigma)
    if np.any(~np.isfinite(sig)) or np.any(sig <= 0):
        raise SolverError("conductivity must be positive and finite on GST cells")
    depth = grid.depth
    n = problem.n
    fa, fb = problem.fa, problem.fb
    G = depth * 2.0 * sig[fa] * sig[fb] / (sig[fa] + sig[fb])
    if face_factor is not None:
        G = G * face_factor
    Gp = depth * 2.0 * sig[problem.pa]
    diag = np.bincount(fa, G, n) + np.bincount(fb, G, n) + np.bincount(problem.pa, Gp, n)
    diag = diag + np.where(problem.leak, LEAK_CONDUCTANCE, 0.0)
    L = sp.coo_matrix(
        (np.concatenate([diag, -G, -G]),
         (np.concatenate([np.arange(n), fa, fb]), np.concatenate([np.arange(n), fb, fa]))),
        shape=(n, n)).tocsc()
    try:
        lu = _splu(L)
    except RuntimeError as exc:
        raise SolverError(f"singular conductance matrix: {exc}") from exc
    rhs = np.zeros((n, N_PORTS))
    np.add.at(rhs, (problem.pa, problem.pp), Gp)
    phi = lu.solve(rhs)
    resid = np.abs(L @ phi - rhs).max() / max(np.abs(rhs).max(), 1e-300)
    if not np.isfinite(resid) or resid > 1e-8:
        raise SolverError(f"potential solve did not converge (relative residual {resid:.3g})")
    Y = np.zeros((N_PORTS, N_PORTS))
    np.add.at(Y, (problem.pp, problem.pp), Gp)
    for q in range(N_PORTS):
        Y[:, q] -= np.bincount(problem.pp, Gp * phi[problem.pa, q], N_PORTS)
    return ConductanceFactor(problem, sig, G, Gp, lu, phi, Y)


def extract_multiport(problem: ElectricalProblem, sigma, S, T, face_factor=None) -> Multiport:
    """Six unit-port responses plus the thermoelectric short-circuit response."""
    return factor_conductance(problem, sigma, face_factor).multiport(S, T)


def solve_potential(grid: Grid, sigma, S, T, port_voltages, face_factor=None,
                    problem: ElectricalProblem | None = None) -> ElectricalSolution:
    """Quasi-static potential with every contact held at a fixed voltage."""
    problem = problem or ElectricalProblem(grid)
    Vp = np.asarray(port_voltages, float)
    if Vp.shape != (N_PORTS,) or not np.all(np.isfinite(Vp)):
        raise ValueError("port_voltages must give a finite voltage for each of the six contacts")
    mp = extract_multiport(problem, sigma, S, T, face_factor)
    return mp.solution(Vp)


# ---------------------------------------------------------------------------
# thermal


@dataclass
class ThermalBoundary:
    """Per-edge Dirichlet temperature, or None for an adiabatic edge."""

    left: float | None = 293.0
    right: float | None = 293.0
    bottom: float | None = 293.0
    top: float | None = 293.0

    @classmethod
    def uniform(cls, T):
        return cls(T, T, T, T)

    def key(self):
        return (self.left, self.right, self.bottom, self.top)


@dataclass
class ThermalStepInfo:
    boundary_heat: float  # W per metre of depth leaving through Dirichlet edges
    stored: float  # J per metre of depth gained by the cells
    source: float  # J per metre of depth injected by sources


def _faces(shape):
    ny, nx = shape
    idx = np.arange(ny * nx).reshape(ny, nx)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def _boundary_terms(shape, k, bc: ThermalBoundary):
    """Diagonal and rhs contributions (per unit depth) from Dirichlet edges."""
    ny, nx = shape
    diag = np.zeros((ny, nx))
    rhs = np.zeros((ny, nx))
    kk = k.reshape(shape)
    for Tb, sl in ((bc.left, (slice(None), 0)), (bc.right, (slice(None), nx - 1)),
                   (bc.bottom, (0, slice(None))), (bc.top, (ny - 1, slice(None)))):
        if Tb is None:
            continue
        g = 2.0 * kk[sl]
        diag[sl] += g
        rhs[sl] += g * Tb
    return diag.ravel(), rhs.ravel()


def assemble_heat_operator(shape, h, k, cap, dt, bc: ThermalBoundary):
    """Backward-Euler operator per unit depth and its boundary rhs."""
    k = np.asarray(k, float).ravel()
    cap = np.asarray(cap, float).ravel()
    N = k.size
    a, b = _faces(shape)
    g = 2.0 * k[a] * k[b] / (k[a] + k[b])
    dbc, rbc = _boundary_terms(shape, k, bc)
    diag = cap * h * h / dt + np.bincount(a, g, N) + np.bincount(b, g, N) + dbc
    A = sp.coo_matrix(
        (np.concatenate([diag, -g, -g]),
         (np.concatenate([np.arange(N), a, b]), np.concatenate([np.arange(N), b, a]))),
        shape=(N, N)).tocsr()
    return A, rbc


def _boundary_outflow(shape, k, T, bc: ThermalBoundary):
    dbc, rbc = _boundary_terms(shape, np.asarray(k, float).ravel(), bc)
    return float(np.sum(dbc * T.ravel() - rbc))


class _SchurLevel:
    def __init__(self, A, fixed, var, ring_local):
        A = A.tocsr()
        self.lu = _splu(A[fixed][:, fixed])
        self.A_fv = A[fixed][:, var].tocsc()
        self.A_vf = A[var][:, fixed].tocsr()
        cols = self.A_fv[:, ring_local].toarray()
        Z = self.lu.solve(cols)
        self.corr = self.A_vf[ring_local] @ Z


class ThermalSolver:
    """Implicit heat-equation stepper.

    With ``variable_mask`` the solver assumes conductivity and heat capacity
    outside the (4-neighbour dilated) mask never change from ``k_ref`` /
    ``cap_ref`` and reuses one factorization per time-step size.  Any step
    whose fields violate that falls back to a direct sparse solve.
    """

    def __init__(self, shape, h, bc: ThermalBoundary, variable_mask=None, k_ref=None,
                 cap_ref=None, max_levels=6):
        self.shape = tuple(shape)
        self.h = h
        self.bc = bc
        self.max_levels = max_levels
        self._levels: OrderedDict[float, _SchurLevel] = OrderedDict()
        self.fast = variable_mask is not None
        if self.fast:
            var_mask = ndimage.binary_dilation(variable_mask)
            self.var = np.flatnonzero(var_mask)
            self.fixed = np.flatnonzero(~var_mask)
            self.k_ref = np.asarray(k_ref, float).ravel().copy()
            self.cap_ref = np.asarray(cap_ref, float).ravel().copy()
            # variable cells coupled to fixed cells
            a, b = _faces(self.shape)
            vm = var_mask.ravel()
            cross = vm[a] != vm[b]
            ring = np.unique(np.where(vm[a[cross]], a[cross], b[cross]))
            local = np.full(vm.size, -1)
            local[self.var] = np.arange(self.var.size)
            self.ring_local = local[ring]
            self.local = local
            # faces internal to the variable set and faces leaving it
            inner = vm[a] & vm[b]
            self.va, self.vb = local[a[inner]], local[b[inner]]
            self.xa = np.where(vm[a[cross]], a[cross], b[cross])
            self.xb = np.where(vm[a[cross]], b[cross], a[cross])
            self._outside_core = ~np.asarray(variable_mask, bool).ravel()

    def _level(self, dt):
        lvl = self._levels.get(dt)
        if lvl is None:
            A, _ = assemble_heat_operator(self.shape, self.h, self.k_ref, self.cap_ref, dt, self.bc)
            lvl = _SchurLevel(A, self.fixed, self.var, self.ring_local)
            self._levels[dt] = lvl
            while len(self._levels) > self.max_levels:
                self._levels.popitem(last=False)
        else:
            self._levels.move_to_end(dt)
        return lvl

    def _fast_ok(self, k, cap):
        fm = self._outside_core
        return np.array_equal(k[fm], self.k_ref[fm]) and np.array_equal(cap[fm], self.cap_ref[fm])

    def step(self, T_old, dt, q, k, cap):
        """One backward-Euler step; ``q`` in W/m^3, ``k`` W/(m K), ``cap`` J/(m^3 K)."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        T_old = np.asarray(T_old, float).ravel()
        q = np.asarray(q, float).ravel()
        k = np.asarray(k, float).ravel()
        cap = np.asarray(cap, float).ravel()
        if not np.all(np.isfinite(q)):
            raise SolverError("non-finite heat source")
        h2 = self.h * self.h
        if self.fast and self._fast_ok(k, cap):
            T_new = self._solve_schur(T_old, dt, q, k, cap)
        else:
            A, rbc = assemble_heat_operator(self.shape, self.h, k, cap, dt, self.bc)
            b = cap * h2 / dt * T_old + q * h2 + rbc
            try:
                T_new = _splu(A).solve(b)
            except RuntimeError as exc:
                raise SolverError(f"heat solve failed: {exc}") from exc
        if not np.all(np.isfinite(T_new)):
            raise SolverError("heat solve produced non-finite temperatures")
        info = ThermalStepInfo(
            boundary_heat=_boundary_outflow(self.shape, k, T_new, self.bc),
            stored=float(np.sum(cap * h2 * (T_new - T_old))),
            source=float(np.sum(q) * h2 * dt))
        return T_new.reshape(self.shape), info

    def _solve_schur(self, T_old, dt, q, k, cap):
        lvl = self._level(dt)
        h2 = self.h * self.h
        _, rbc = _boundary_terms(self.shape, k, self.bc)
        b = cap * h2 / dt * T_old + q * h2 + rbc
        var, fixed = self.var, self.fixed
        nv = var.size
        kv = k[var]
        g_in = 2.0 * kv[self.va] * kv[self.vb] / (kv[self.va] + kv[self.vb])
        g_x = 2.0 * k[self.xa] * k[self.xb] / (k[self.xa] + k[self.xb])
        dbc, _ = _boundary_terms(self.shape, k, self.bc)
        diag = cap[var] * h2 / dt + np.bincount(self.va, g_in, nv) + np.bincount(self.vb, g_in, nv)
        diag += np.bincount(self.local[self.xa], g_x, nv) + dbc[var]
        rl = self.ring_local
        ri, rj = np.meshgrid(rl, rl, indexing="ij")
        S = sp.coo_matrix(
            (np.concatenate([diag, -g_in, -g_in, -lvl.corr.ravel()]),
             (np.concatenate([np.arange(nv), self.va, self.vb, ri.ravel()]),
              np.concatenate([np.arange(nv), self.vb, self.va, rj.ravel()]))),
            shape=(nv, nv)).tocsc()
        y = lvl.lu.solve(b[fixed])
        xv = spla.splu(S).solve(b[var] - lvl.A_vf @ y)
        xf = lvl.lu.solve(b[fixed] - lvl.A_fv @ xv)
        T = np.empty_like(T_old)
        T[var] = xv
        T[fixed] = xf
        return T


_SOLVER_CACHE: OrderedDict[str, ThermalSolver] = OrderedDict()


def shared_thermal_solver(grid: Grid, k_ref, cap_ref, variable_mask, max_levels=6):
    """Process-wide solver reuse so sweeps share cached factorizations."""
    bc = ThermalBoundary.uniform(grid.T_boundary)
    hsh = hashlib.sha1()
    for arr in (np.ascontiguousarray(k_ref, float), np.ascontiguousarray(cap_ref, float),
                np.ascontiguousarray(variable_mask, bool)):
        hsh.update(arr.tobytes())
    key = f"{grid.shape}-{grid.h!r}-{bc.key()}-{hsh.hexdigest()}"
    solver = _SOLVER_CACHE.get(key)
    if solver is None:
        solver = ThermalSolver(grid.shape, grid.h, bc, variable_mask, k_ref, cap_ref, max_levels)
        _SOLVER_CACHE[key] = solver
        while len(_SOLVER_CACHE) > 2:
            _SOLVER_CACHE.popitem(last=False)
    else:
        _SOLVER_CACHE.move_to_end(key)
    return solver


def step_temperature(grid: Grid, T, dt, joule, thomson, latent, k_field, cap_field,
                     solver: ThermalSolver | None = None):
    """Backward-Euler temperature update with explicit sources (W/m^3)."""
    solver = solver or ThermalSolver(grid.shape, grid.h, ThermalBoundary.uniform(grid.T_boundary))
    q = np.asarray(joule, float) + np.asarray(thomson, float) + np.asarray(latent, float)
    return solver.step(T, dt, q, k_field, cap_field)


# ---------------------------------------------------------------------------
# conservation check


ENERGY_FLOOR = 1e-21  # J


@dataclass
class EnergyBalance:
    """Energies (J) exchanged by the whole device over one step."""

    stored: float
    electrical_in: float
    latent: float
    boundary: float

    @property
    def residual(self):
        return self.stored - (self.electrical_in + self.latent - self.boundary)

    @property
    def relative_residual(self):
        """Residual over the largest exchanged energy, floored at ``ENERGY_FLOOR``
        so round-off on idle steps does not register."""
        scale = max(abs(self.stored), abs(self.electrical_in), abs(self.latent), abs(self.boundary),
                    ENERGY_FLOOR)
        return abs(self.residual) / scale


def energy_audit(balance: EnergyBalance) -> dict:
    return {
        "stored_J": balance.stored,
        "electrical_in_J": balance.electrical_in,
        "latent_J": balance.latent,
        "boundary_J": balance.boundary,
        "residual_J": balance.residual,
        "relative_residual": balance.relative_residual,
    }


def material_fields(grid: Grid, materials, crystallinity, T):
    """Thermal conductivity and volumetric heat capacity on every cell."""
    k = np.empty(grid.shape)
    cap = np.empty(grid.shape)
    for mat in Material:
        m = grid.material == mat
        if not m.any():
            continue
        k[m] = materials.thermal_k(mat, crystallinity[m] if mat is Material.GST else 0.0, T[m])
        cap[m] = materials.volumetric_heat_capacity(mat, T[m])
    return k, cap
