"""Finite-element TAP pulse solver with discrete adjoint and tangent sweeps.

Gas transport uses linear elements with a lumped (void-weighted) mass matrix
on the refined mesh, a zero-flux inlet and a vacuum (Dirichlet) outlet.  The
default ``semi_implicit`` scheme advances diffusion with Crank-Nicolson and
the surface kinetics explicitly; ``implicit`` solves the coupled backward
Euler system with Newton.  The first step after every pulse injection is a
backward Euler step, which damps the grid-scale modes a delta pulse excites.

Every step map has hand-written vector-Jacobian (``_vjp``) and
Jacobian-vector (``_jvp``) products, so gradients are exact for the discrete
scheme.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.linalg import splu

from .mechanism import Mechanism
from .reactor import CATALYST, INERT_2, Mesh, ReactorSpec

log = logging.getLogger(__name__)

SEMI_IMPLICIT = "semi_implicit"
IMPLICIT = "implicit"

# full trajectories are kept in memory below this many stored values
CHECKPOINT_LIMIT = 20_000_000


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class PulseSchedule:
    """Per-gas pulse intensity (nmol), in-pulse time offset (s) and mass (amu)."""

    gases: tuple[str, ...]
    intensities: tuple[float, ...]
    times: tuple[float, ...]
    masses: tuple[float, ...]
    pulse_count: int = 1
    spacing: float | None = None

    def __post_init__(self):
        n = len(self.gases)
        if not (len(self.intensities) == len(self.times) == len(self.masses) == n):
            raise ValueError("pulse schedule columns must have equal length")
        if any(v < 0 for v in self.intensities):
            raise ValueError("pulse intensities must be >= 0")
        if any(t < 0 for t in self.times):
            raise ValueError("pulse times must be >= 0")
        if any(not m > 0 for m in self.masses):
            raise ValueError("gas masses must be positive")
        if self.pulse_count < 1:
            raise ValueError("pulse count must be >= 1")

    def intensity(self, gas: str) -> float:
        return self.intensities[self.gases.index(gas)]


@dataclass(frozen=True)
class SolverConfig:
    total_time: float = 1.0
    n_steps: int = 1000
    scheme: str = SEMI_IMPLICIT
    newton_tol: float = 1e-10
    max_newton: int = 30
    max_halvings: int = 12
    positivity_tol: float = 1e-9

    def __post_init__(self):
        if self.n_steps < 10:
            raise ValueError("at least 10 time steps are required")
        if not self.total_time > 0 or not self.newton_tol > 0 or not self.positivity_tol > 0:
            raise ValueError("time and tolerances must be positive")
        if self.scheme not in (SEMI_IMPLICIT, IMPLICIT):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def dt(self) -> float:
        return self.total_time / self.n_steps


@dataclass
class SimulationResult:
    times: np.ndarray
    gas_names: list[str]
    flux: np.ndarray  # (n_gas, n_times), nmol/s
    pulse_starts: list[int]
    catalyst_x: np.ndarray
    catalyst_fields: dict[str, np.ndarray]  # species -> (n_times, n_catalyst_nodes)
    mass_balance: dict[str, dict[str, float]]
    element_balance: dict[str, dict[str, float]] = field(default_factory=dict)
    n_substeps: int = 0
    n_halvings: int = 0
    intensities: dict[str, float] = field(default_factory=dict)

    def flux_of(self, gas: str) -> np.ndarray:
        return self.flux[self.gas_names.index(gas)]

    @property
    def n_pulses(self) -> int:
        return len(self.pulse_starts)

    def pulse(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Local time grid and fluxes of pulse ``j`` (0-based)."""
        if not 0 <= j < self.n_pulses:
            raise IndexError(f"pulse {j + 1} does not exist (run has {self.n_pulses})")
        a = self.pulse_starts[j]
        b = self.pulse_starts[j + 1] + 1 if j + 1 < self.n_pulses else len(self.times)
        return self.times[a:b] - self.times[a], self.flux[:, a:b]


class Operators:
    """Assembled discrete operators for one reactor/mesh/mechanism combination."""

    def __init__(self, mech: Mechanism, reactor: ReactorSpec, mesh: Mesh, gas_names, gas_masses):
        self.mech = mech
        self.reactor = reactor
        self.mesh = mesh
        self.gas_names = list(gas_names)
        self.n_gas = len(self.gas_names)
        self.n_mech_gas = len(mech.gas_names)
        if self.gas_names[: self.n_mech_gas] != mech.gas_names:
            raise ValueError("mechanism gases must come first in the gas list")
        self.surface_names = mech.surface_names
        self.n_surf = len(self.surface_names)
        self.kin = mech.kinetics()
        self.S = self.kin.S

        w = mesh.widths
        if np.any(w <= 0):
            bad = int(np.argmin(w))
            raise SolverError(f"singular system: mesh cell {bad} has width {w[bad]}")
        N = mesh.n_cells
        self.N = N
        self.area = reactor.area
        eps = np.asarray(reactor.zone_voids)[mesh.zones]
        m = np.zeros(N + 1)
        m[:-1] += eps * w / 2
        m[1:] += eps * w / 2
        self.mass = m[:N]

        cat_cells = mesh.zones == CATALYST
        wc = np.where(cat_cells, w, 0.0)
        react = np.zeros(N + 1)
        react[:-1] += wc / 2
        react[1:] += wc / 2
        self.cat_idx = mesh.catalyst_nodes
        if self.cat_idx[-1] >= N:
            raise SolverError("catalyst zone may not touch the reactor outlet")
        self.cat_weight = react[self.cat_idx]
        self.catalyst_x = np.asarray(mesh.nodes)[self.cat_idx]

        self.D = np.array([reactor.diffusion(mm) for mm in gas_masses])  # (n_gas, 3)
        kd = self.D[:, mesh.zones] / w  # (n_gas, N cells)
        diag = np.zeros((self.n_gas, N + 1))
        diag[:, :-1] += kd
        diag[:, 1:] += kd
        self.k_diag = diag[:, :N]
        self.k_off = -kd[:, : N - 1]
        self.flux_coef = self.area * self.D[:, INERT_2] / w[-1]
        self._factors: dict[tuple[float, float], list] = {}

    # -- linear algebra -------------------------------------------------
    def apply_k(self, C):
        """Stiffness times ``C`` for every gas; trailing direction axes allowed."""
        extra = (slice(None), slice(None)) + (None,) * (C.ndim - 2)
        out = self.k_diag[extra] * C
        out[:, :-1] += self.k_off[extra] * C[:, 1:]
        out[:, 1:] += self.k_off[extra] * C[:, :-1]
        return out

    def _factor(self, dt, cn):
        key = (dt, cn)
        fac = self._factors.get(key)
        if fac is None:
            fac = []
            for g in range(self.n_gas):
                off = cn * dt * self.k_off[g]
                d = self.mass + cn * dt * self.k_diag[g]
                dl, dd, du, du2, ipiv, info = lapack.dgttrf(off, d, off)
                if info != 0:
                    raise SolverError(f"singular transport matrix for gas {self.gas_names[g]}")
                fac.append((dl, dd, du, du2, ipiv))
            if len(self._factors) > 64:
                self._factors.clear()
            self._factors[key] = fac
        return fac

    def solve(self, dt, cn, rhs):
        """Solve ``(M + cn dt K) x = rhs`` gas by gas (the matrices are symmetric)."""
        fac = self._factor(dt, cn)
        out = np.empty_like(rhs)
        for g in range(self.n_gas):
            b = rhs[g] if rhs.ndim > 2 else rhs[g][:, None]
            x, info = lapack.dgttrs(*fac[g], b)
            out[g] = x if rhs.ndim > 2 else x[:, 0]
        return out

    # -- state helpers --------------------------------------------------
    def stack(self, C, th):
        return np.concatenate([C[: self.n_mech_gas, self.cat_idx], th], axis=0)

    def flux(self, C):
        return self.flux_coef * C[:, -1]

    def zero_state(self):
        return np.zeros((self.n_gas, self.N)), np.zeros((self.n_surf, len(self.cat_idx)))

    def injection(self, gas_index, n_pulse):
        """Concentration increment at the inlet node carrying ``n_pulse`` nmol."""
        return n_pulse / (self.area * self.mass[0])

    # -- semi-implicit step --------------------------------------------
    def semi_step(self, C, th, kf, kb, dt, cn):
        ng = self.n_mech_gas
        X = self.stack(C, th)
        P = self.S @ self.kin.rates(X, kf, kb)
        rhs = self.mass * C - (1 - cn) * dt * self.apply_k(C)
        rhs[:ng, self.cat_idx] += dt * self.cat_weight * P[:ng]
        return self.solve(dt, cn, rhs), th + dt * P[ng:]

    def semi_vjp(self, C, th, kf, kb, dt, cn, lam_c, lam_th):
        ng = self.n_mech_gas
        X = self.stack(C, th)
        mu = self.solve(dt, cn, lam_c)
        out_c = self.mass * mu - (1 - cn) * dt * self.apply_k(mu)
        lam_p = np.concatenate([dt * self.cat_weight * mu[:ng, self.cat_idx], dt * lam_th], axis=0)
        lam_x, gkf, gkb = self.kin.rate_vjp(X, kf, kb, self.S.T @ lam_p)
        out_c[:ng, self.cat_idx] += lam_x[:ng]
        return out_c, lam_th + lam_x[ng:], gkf, gkb

    def semi_jvp(self, C, th, kf, kb, dt, cn, dC, dth, dkf, dkb):
        ng = self.n_mech_gas
        X = self.stack(C, th)
        dX = np.concatenate([dC[:ng, self.cat_idx], dth], axis=0)
        dP = np.einsum("sm,mcd->scd", self.S, self.kin.rate_jvp(X, kf, kb, dX, dkf, dkb))
        rhs = self.mass[:, None] * dC - (1 - cn) * dt * self.apply_k(dC)
        rhs[:ng, self.cat_idx] += dt * self.cat_weight[:, None] * dP[:ng]
        return self.solve(dt, cn, rhs), dth + dt * dP[ng:]

    # -- implicit (backward Euler + Newton) step ------------------------
    def _implicit_residual(self, C1, th1, C0, th0, kf, kb, dt):
        ng = self.n_mech_gas
        P = self.S @ self.kin.rates(self.stack(C1, th1), kf, kb)
        rc = self.mass * (C1 - C0) + dt * self.apply_k(C1)
        rc[:ng, self.cat_idx] -= dt * self.cat_weight * P[:ng]
        rt = th1 - th0 - dt * P[ng:]
        return rc, rt

    def _implicit_jacobian(self, C1, th1, kf, kb, dt):
        N, ng, nc = self.N, self.n_mech_gas, len(self.cat_idx)
        n_c = self.n_gas * N
        rows, cols, vals = [], [], []
        for g in range(self.n_gas):
            base = g * N
            idx = np.arange(N)
            rows += [base + idx, base + idx[1:], base + idx[:-1]]
            cols += [base + idx, base + idx[:-1], base + idx[1:]]
            vals += [self.mass + dt * self.k_diag[g], dt * self.k_off[g], dt * self.k_off[g]]
        ns = self.n_surf
        tidx = n_c + np.arange(ns * nc)
        rows.append(tidx)
        cols.append(tidx)
        vals.append(np.ones(ns * nc))
        jac = self.kin.rate_jacobian(self.stack(C1, th1), kf, kb)
        dP = np.einsum("sm,mjc->sjc", self.S, jac)
        cpos = np.arange(nc)

        def dof(i):
            return i * N + self.cat_idx if i < ng else n_c + (i - ng) * nc + cpos

        nsp = ng + ns
        for i in range(nsp):
            scale = dt * (self.cat_weight if i < ng else 1.0)
            for j in range(nsp):
                v = dP[i, j]
                if np.any(v):
                    rows.append(dof(i))
                    cols.append(dof(j))
                    vals.append(-scale * v)
        n = n_c + ns * nc
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )

    def _split(self, z):
        n_c = self.n_gas * self.N
        C = z[:n_c].reshape((self.n_gas, self.N) + z.shape[1:])
        th = z[n_c:].reshape((self.n_surf, len(self.cat_idx)) + z.shape[1:])
        return C, th

    @staticmethod
    def _join(C, th):
        return np.concatenate([C.reshape((-1,) + C.shape[2:]), th.reshape((-1,) + th.shape[2:])])

    def implicit_step(self, C, th, kf, kb, dt, cfg: SolverConfig):
        C1, th1 = C.copy(), th.copy()
        scale = max(1.0, float(np.max(np.abs(C))), float(np.max(np.abs(th), initial=0.0)))
        for _ in range(cfg.max_newton):
            rc, rt = self._implicit_residual(C1, th1, C, th, kf, kb, dt)
            jac = self._implicit_jacobian(C1, th1, kf, kb, dt)
            try:
                delta = splu(jac).solve(-self._join(rc, rt))
            except RuntimeError as exc:
                raise SolverError(f"singular Newton matrix: {exc}") from None
            dC, dth = self._split(delta)
            C1 += dC
            th1 += dth
            if not np.all(np.isfinite(delta)):
                break
            if np.max(np.abs(delta)) <= cfg.newton_tol * scale:
                return C1, th1
        raise SolverError("Newton iteration did not converge")

    def implicit_vjp(self, C1, th1, kf, kb, dt, lam_c, lam_th):
        ng = self.n_mech_gas
        jac = self._implicit_jacobian(C1, th1, kf, kb, dt)
        nu = splu(jac.T.tocsc()).solve(self._join(lam_c, lam_th))
        nu_c, nu_th = self._split(nu)
        lam_p = np.concatenate([self.cat_weight * nu_c[:ng, self.cat_idx], nu_th], axis=0)
        _, gkf, gkb = self.kin.rate_vjp(self.stack(C1, th1), kf, kb, dt * (self.S.T @ lam_p))
        return self.mass * nu_c, nu_th, gkf, gkb

    def implicit_jvp(self, C1, th1, kf, kb, dt, dC, dth, dkf, dkb):
        ng = self.n_mech_gas
        X1 = self.stack(C1, th1)
        zero = np.zeros(X1.shape + (dkf.shape[1],))
        dP = np.einsum("sm,mcd->scd", self.S, self.kin.rate_jvp(X1, kf, kb, zero, dkf, dkb))
        rc = self.mass[:, None] * dC
        rc[:ng, self.cat_idx] += dt * self.cat_weight[:, None] * dP[:ng]
        rt = dth + dt * dP[ng:]
        jac = self._implicit_jacobian(C1, th1, kf, kb, dt)
        return self._split(splu(jac).solve(self._join(rc, rt)))


def assemble_system(mech: Mechanism, reactor: ReactorSpec, mesh: Mesh, schedule: PulseSchedule) -> Operators:
    """Build the discrete operators; gas order is mechanism gases then inert gases."""
    missing = [g for g in mech.gas_names if g not in schedule.gases]
    if missing:
        raise ValueError(f"gases {missing} appear in the mechanism but not in the pulse schedule")
    inerts = [g for g in schedule.gases if g not in mech.gas_names]
    names = mech.gas_names + inerts
    masses = [schedule.masses[schedule.gases.index(g)] for g in names]
    return Operators(mech, reactor, mesh, names, masses)


def inject_pulse(C, gas_index: int, n_pulse: float, ops: Operators):
    """Deposit ``n_pulse`` nmol into the inlet control volume of one gas (returns a new array)."""
    out = np.array(C, dtype=float, copy=True)
    if n_pulse:
        out[gas_index, 0] += ops.injection(gas_index, n_pulse)
    return out


def outlet_flux(C, ops: Operators):
    """Outlet molar flow (nmol/s) of every gas from the last-cell gradient."""
    return ops.flux(np.asarray(C))


@dataclass
class _Tape:
    """Record of the executed step sequence for adjoint/tangent replay."""

    substeps: list  # per nominal step: list of (dt, cn)
    injections: list  # per nominal step: None or (n_gas,) inlet increments
    states: dict  # nominal step -> (C, th) at the start of that step (after injection)
    stride: int
    scheme: str


_ELEMENT_RE = re.compile(r"([A-Z][a-z]?)(\d*)")


def _composition(name: str) -> dict[str, int] | None:
    body = name.rstrip("*")
    if not body:
        return {}
    if "".join(m.group(0) for m in _ELEMENT_RE.finditer(body)) != body:
        return None
    comp: dict[str, int] = {}
    for el, n in _ELEMENT_RE.findall(body):
        comp[el] = comp.get(el, 0) + (int(n) if n else 1)
    return comp


class TapModel:
    """A configured TAP experiment that can be simulated and differentiated."""

    def __init__(self, mech, reactor, mesh, schedule, surface0=None, config=None):
        self.mech = mech
        self.reactor = reactor
        self.mesh = mesh
        self.schedule = schedule
        self.config = config or SolverConfig()
        self.ops = assemble_system(mech, reactor, mesh, schedule)
        surface0 = dict(surface0 or {})
        unknown = set(surface0) - set(mech.surface_names)
        if unknown:
            raise ValueError(f"initial composition given for unknown surface species {sorted(unknown)}")
        if any(v < 0 for v in surface0.values()):
            raise ValueError("initial surface concentrations must be >= 0")
        self.surface0 = np.array([float(surface0.get(s, 0.0)) for s in mech.surface_names])
        self.kf0, self.kb0 = mech.rate_constants(reactor.temperature)
        self._build_pulse_table()

    @property
    def gas_names(self):
        return self.ops.gas_names

    @property
    def n_times(self):
        return self.config.n_steps + 1

    @property
    def times(self):
        return np.linspace(0.0, self.config.total_time, self.config.n_steps + 1)

    def _build_pulse_table(self):
        cfg, sched = self.config, self.schedule
        dt = cfg.dt
        spacing = sched.spacing if sched.spacing is not None else cfg.total_time / sched.pulse_count
        self.pulse_spacing = spacing
        self.pulse_starts = [int(round(j * spacing / dt)) for j in range(sched.pulse_count)]
        table: dict[int, np.ndarray] = {}
        self.injected = np.zeros(self.ops.n_gas)
        for g, name in enumerate(self.ops.gas_names):
            n_p = sched.intensity(name)
            for j in range(sched.pulse_count):
                t = j * spacing + sched.times[sched.gases.index(name)]
                idx = int(round(t / dt))
                if idx >= cfg.n_steps:
                    raise ValueError(f"pulse {j + 1} of {name} at t={t} s lies outside the simulated window")
                if n_p > 0:
                    table.setdefault(idx, np.zeros(self.ops.n_gas))[g] += self.ops.injection(g, n_p)
                    self.injected[g] += n_p
        self.pulse_table = table

    # -- forward ---------------------------------------------------------
    def _try_step(self, C, th, kf, kb, dt, cn):
        cfg = self.config
        if cfg.scheme == SEMI_IMPLICIT:
            C1, th1 = self.ops.semi_step(C, th, kf, kb, dt, cn)
        else:
            try:
                C1, th1 = self.ops.implicit_step(C, th, kf, kb, dt, cfg)
            except SolverError:
                return None
        if not (np.all(np.isfinite(C1)) and np.all(np.isfinite(th1))):
            return None
        sc = max(float(np.max(np.abs(C))), float(np.max(np.abs(C1))), 1e-300)
        if C1.min() < -cfg.positivity_tol * sc:
            return None
        if th1.size:
            st = max(float(np.max(np.abs(th))), float(np.max(np.abs(th1))), 1e-300)
            if th1.min() < -cfg.positivity_tol * st:
                return None
        return C1, th1

    def _advance(self, C, th, kf, kb, dt, cn, depth, trail):
        """Advance by ``dt``, halving on positivity or Newton failure.

        Accepted substeps are appended to ``trail`` as ``(dt, cn, C0, th0, C1, th1)``.
        """
        out = self._try_step(C, th, kf, kb, dt, cn)
        if out is not None:
            trail.append((dt, cn, C, th) + out)
            return out
        if depth >= self.config.max_halvings:
            raise SolverError(
                f"step of {dt:.3e} s still fails after {self.config.max_halvings} halvings "
                "(stiff kinetics or negative concentrations); try --scheme implicit or more time steps"
            )
        C, th = self._advance(C, th, kf, kb, dt / 2, cn, depth + 1, trail)
        return self._advance(C, th, kf, kb, dt / 2, cn, depth + 1, trail)

    def _replay(self, C, th, kf, kb, substeps):
        """Re-execute a recorded substep sequence; returns all intermediate states."""
        states = [(C, th)]
        for dt, cn in substeps:
            if self.config.scheme == SEMI_IMPLICIT:
                C, th = self.ops.semi_step(C, th, kf, kb, dt, cn)
            else:
                C, th = self.ops.implicit_step(C, th, kf, kb, dt, self.config)
            states.append((C, th))
        return states

    def rate_vectors(self, kf=None, kb=None):
        kf = self.kf0 if kf is None else np.asarray(kf, dtype=float)
        kb = self.kb0 if kb is None else np.asarray(kb, dtype=float)
        if kf.shape != (self.mech.n_steps,) or kb.shape != (self.mech.n_steps,):
            raise ValueError("rate-constant vectors do not match the mechanism")
        return kf, kb

    def simulate(self, kf=None, kb=None, record_fields=True, tape=False):
        """Run the whole pulse sequence; returns ``result`` or ``(result, tape)``."""
        kf, kb = self.rate_vectors(kf, kb)
        ops, cfg = self.ops, self.config
        n_t = cfg.n_steps
        dt = cfg.dt
        ng = ops.n_mech_gas
        implicit = cfg.scheme == IMPLICIT
        C, th = ops.zero_state()
        th += self.surface0[:, None]
        flux = np.zeros((ops.n_gas, n_t + 1))
        fields = np.zeros((n_t + 1, ops.n_gas + ops.n_surf, len(ops.cat_idx))) if record_fields else None
        if record_fields:
            fields[0] = np.concatenate([C[:, ops.cat_idx], th])
        n_vals = 2 * (n_t + 1) * (C.size + th.size)
        stride = 1 if n_vals <= CHECKPOINT_LIMIT else max(2, int(math.sqrt(n_t)))
        rec = _Tape([], [], {}, stride, cfg.scheme)
        efflux = np.zeros(ops.n_gas)
        produced = np.zeros(ops.n_gas)
        n_sub = 0
        startup = False
        for n in range(n_t):
            inj = self.pulse_table.get(n)
            if inj is not None:
                C = C.copy()
                C[:, 0] += inj
                startup = True
            cn = 1.0 if startup else 0.5
            startup = False
            trail: list = []
            C, th = self._advance(C, th, kf, kb, dt, cn, 0, trail)
            n_sub += len(trail)
            for dts, cns, C0, th0, C1, th1 in trail:
                if implicit:
                    efflux += dts * ops.flux(C1)
                    X = ops.stack(C1, th1)
                else:
                    efflux += dts * (cns * ops.flux(C1) + (1 - cns) * ops.flux(C0))
                    X = ops.stack(C0, th0)
                P = ops.S[:ng] @ ops.kin.rates(X, kf, kb)
                produced[:ng] += ops.area * dts * (ops.cat_weight * P).sum(axis=1)
            if tape:
                rec.substeps.append([(t[0], t[1]) for t in trail])
                rec.injections.append(inj)
                if n % stride == 0:
                    if stride == 1:
                        rec.states[n] = [(t[2], t[3]) for t in trail] + [(C, th)]
                    else:
                        rec.states[n] = [(trail[0][2], trail[0][3])]
            flux[:, n + 1] = ops.flux(C)
            if record_fields:
                fields[n + 1] = np.concatenate([C[:, ops.cat_idx], th])
        result = self._result(C, th, flux, fields, efflux, produced, n_sub)
        if not np.all(np.isfinite(flux)):
            raise SolverError("non-finite outlet flux")
        return (result, rec) if tape else result

    def _result(self, C, th, flux, fields, efflux, produced, n_sub):
        ops = self.ops
        remaining = ops.area * (ops.mass * C).sum(axis=1)
        balance = {}
        for g, name in enumerate(ops.gas_names):
            inj = float(self.injected[g])
            res = inj + produced[g] - remaining[g] - efflux[g]
            balance[name] = {
                "injected": inj,
                "produced": float(produced[g]),
                "in_reactor": float(remaining[g]),
                "outlet": float(efflux[g]),
                "residual": float(res),
            }
        surface_moles = ops.area * (ops.cat_weight * th).sum(axis=1)
        elements = self._element_balance(remaining, efflux, surface_moles)
        cat_fields = {}
        if fields is not None:
            names = ops.gas_names + ops.surface_names
            cat_fields = {n: fields[:, i, :] for i, n in enumerate(names)}
        return SimulationResult(
            times=self.times,
            gas_names=list(ops.gas_names),
            flux=flux,
            pulse_starts=list(self.pulse_starts),
            catalyst_x=ops.catalyst_x,
            catalyst_fields=cat_fields,
            mass_balance=balance,
            element_balance=elements,
            n_substeps=n_sub,
            n_halvings=n_sub - self.config.n_steps,
            intensities={g: float(self.schedule.intensity(g)) for g in ops.gas_names},
        )

    def _element_balance(self, remaining, efflux, surface_moles):
        ops = self.ops
        names = ops.gas_names + ops.surface_names
        comps = [_composition(n) for n in names]
        if any(c is None for c in comps):
            return {}
        # only meaningful when every step conserves elements
        for st in self.mech.steps:
            tally: dict[str, int] = {}
            for n, c in st.reactants:
                for el, k in _composition(n).items():
                    tally[el] = tally.get(el, 0) - c * k
            for n, c in st.products:
                for el, k in _composition(n).items():
                    tally[el] = tally.get(el, 0) + c * k
            if any(tally.values()):
                return {}
        surf0 = ops.area * ops.cat_weight.sum() * self.surface0
        out: dict[str, dict[str, float]] = {}
        els = sorted({el for c in comps for el in c})
        for el in els:
            g_comp = np.array([comps[g].get(el, 0) for g in range(ops.n_gas)])
            s_comp = np.array([comps[ops.n_gas + s].get(el, 0) for s in range(ops.n_surf)])
            injected = float(g_comp @ self.injected + s_comp @ surf0)
            gas = float(g_comp @ remaining)
            surf = float(s_comp @ surface_moles)
            out_ = float(g_comp @ efflux)
            out[el] = {"injected": injected, "gas": gas, "surface": surf, "outlet": out_,
                       "residual": injected - gas - surf - out_}
        return out

    # -- reverse (adjoint) sweep ----------------------------------------
    def adjoint(self, rec: _Tape, kf, kb, dj_dflux):
        """Gradient of a flux functional w.r.t. ``(kf, kb)``.

        ``dj_dflux`` is ``dJ/dF`` on the nominal grid, shape (n_gas, n_times).
        """
        kf, kb = self.rate_vectors(kf, kb)
        ops = self.ops
        n_t = self.config.n_steps
        lam_c, lam_th = ops.zero_state()
        gkf = np.zeros_like(kf)
        gkb = np.zeros_like(kb)
        implicit = rec.scheme == IMPLICIT
        cache: dict[int, list] = {}
        for n in range(n_t - 1, -1, -1):
            lam_c[:, -1] += dj_dflux[:, n + 1] * ops.flux_coef
            states = self._states_for(rec, n, kf, kb, cache)
            for i in range(len(rec.substeps[n]) - 1, -1, -1):
                dts, cn = rec.substeps[n][i]
                if implicit:
                    C1, th1 = states[i + 1]
                    lam_c, lam_th, a, b = ops.implicit_vjp(C1, th1, kf, kb, dts, lam_c, lam_th)
                else:
                    C0, th0 = states[i]
                    lam_c, lam_th, a, b = ops.semi_vjp(C0, th0, kf, kb, dts, cn, lam_c, lam_th)
                gkf += a
                gkb += b
        lam_c[:, -1] += dj_dflux[:, 0] * ops.flux_coef
        return gkf, gkb

    def _states_for(self, rec: _Tape, n, kf, kb, cache):
        """Substep states of nominal step ``n`` (recomputed from the nearest checkpoint if needed)."""
        if rec.stride == 1:
            return rec.states[n]
        if n in cache:
            return cache.pop(n)
        base = n - n % rec.stride
        C, th = rec.states[base][0]
        seg = {}
        for j in range(base, n + 1):
            if j != base and rec.injections[j] is not None:
                C = C.copy()
                C[:, 0] += rec.injections[j]
            states = self._replay(C, th, kf, kb, rec.substeps[j])
            seg[j] = states
            C, th = states[-1]
        cache.clear()
        cache.update({j: st for j, st in seg.items() if j < n})
        return seg[n]

    # -- forward tangent sweep ------------------------------------------
    def tangent(self, rec: _Tape, kf, kb, dkf, dkb):
        """Directional derivatives of the outlet fluxes.

        ``dkf``/``dkb`` have shape (n_steps, n_dir); returns (n_gas, n_times, n_dir).
        """
        kf, kb = self.rate_vectors(kf, kb)
        ops = self.ops
        n_dir = dkf.shape[1]
        n_t = self.config.n_steps
        C, th = ops.zero_state()
        th += self.surface0[:, None]
        dC = np.zeros(C.shape + (n_dir,))
        dth = np.zeros(th.shape + (n_dir,))
        dflux = np.zeros((ops.n_gas, n_t + 1, n_dir))
        for n in range(n_t):
            if rec.injections[n] is not None:
                C = C.copy()
                C[:, 0] += rec.injections[n]
            for dts, cn in rec.substeps[n]:
                if rec.scheme == IMPLICIT:
                    C, th = ops.implicit_step(C, th, kf, kb, dts, self.config)
                    dC, dth = ops.implicit_jvp(C, th, kf, kb, dts, dC, dth, dkf, dkb)
                else:
                    dC, dth = ops.semi_jvp(C, th, kf, kb, dts, cn, dC, dth, dkf, dkb)
                    C, th = ops.semi_step(C, th, kf, kb, dts, cn)
            dflux[:, n + 1] = ops.flux_coef[:, None] * dC[:, -1]
        return dflux


def step(C, th, ops: Operators, kf, kb, dt, config: SolverConfig, cn=0.5):
    """One time step of the configured scheme without step-size control."""
    if config.scheme == SEMI_IMPLICIT:
        return ops.semi_step(C, th, kf, kb, dt, cn)
    return ops.implicit_step(C, th, kf, kb, dt, config)


def simulate(mech, reactor, mesh, schedule, surface0=None, config=None, **kw) -> SimulationResult:
    return TapModel(mech, reactor, mesh, schedule, surface0, config).simulate(**kw)
