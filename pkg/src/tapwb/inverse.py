"""Objective assembly and bound-constrained rate-constant fitting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize

from .constants import R_GAS
from .mechanism import MechanismError, param_name
from .solver import SimulationResult, SolverError, TapModel

log = logging.getLogger(__name__)

K_MIN = 1e-12


class ObjectiveError(ValueError):
    pass


class OptimizerError(RuntimeError):
    pass


@dataclass
class ExperimentalCurves:
    """Observed outlet fluxes: gas -> (times in s, flux in nmol/s)."""

    curves: dict[str, tuple[np.ndarray, np.ndarray]]
    noise_sigma: float | None = None
    resampled: bool = False

    def __post_init__(self):
        clean = {}
        for gas, (t, f) in self.curves.items():
            t = np.asarray(t, dtype=float)
            f = np.asarray(f, dtype=float)
            if t.shape != f.shape or t.ndim != 1:
                raise ObjectiveError(f"{gas}: time and flux columns differ in length")
            bad = np.flatnonzero(np.diff(t) <= 0)
            if bad.size:
                raise ObjectiveError(f"{gas}: times must be strictly increasing (row {bad[0] + 1})")
            if not np.all(np.isfinite(f)):
                raise ObjectiveError(f"{gas}: non-finite flux value at row {int(np.flatnonzero(~np.isfinite(f))[0])}")
            clean[gas] = (t, f)
        self.curves = clean
        grids = [c[0] for c in clean.values()]
        self.resampled = any(len(g) != len(grids[0]) or not np.array_equal(g, grids[0]) for g in grids)

    @property
    def gases(self) -> list[str]:
        return list(self.curves)

    @classmethod
    def from_result(cls, result: SimulationResult, gases=None, noise=0.0, seed=None):
        """Synthetic observations from a simulation, optionally with Gaussian noise (fraction of peak)."""
        gases = list(gases or result.gas_names)
        rng = np.random.default_rng(seed)
        curves = {}
        for g in gases:
            f = result.flux_of(g).copy()
            if noise:
                f = f + rng.normal(0.0, noise * np.max(np.abs(f)), f.shape)
            curves[g] = (result.times.copy(), f)
        return cls(curves, noise_sigma=noise or None)


def _interp_matrix(grid: np.ndarray, t: np.ndarray) -> sp.csr_matrix:
    if t[0] < grid[0] - 1e-12 or t[-1] > grid[-1] * (1 + 1e-12) + 1e-12:
        raise ObjectiveError(
            f"observation times [{t[0]}, {t[-1]}] s fall outside the simulated window [{grid[0]}, {grid[-1]}] s"
        )
    t = np.clip(t, grid[0], grid[-1])
    j = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(grid) - 2)
    w = (t - grid[j]) / (grid[j + 1] - grid[j])
    rows = np.arange(len(t))
    return sp.csr_matrix(
        (np.concatenate([1 - w, w]), (np.concatenate([rows, rows]), np.concatenate([j, j + 1]))),
        shape=(len(t), len(grid)),
    )


class DataMisfit:
    """Least-squares flux misfit with cached interpolation onto observation times."""

    def __init__(self, grid, gas_names, obs: ExperimentalCurves):
        self.gas_index = {}
        self.ops = {}
        self.targets = {}
        for gas, (t, f) in obs.curves.items():
            if gas not in gas_names:
                raise ObjectiveError(f"observed gas {gas!r} is not simulated")
            self.gas_index[gas] = gas_names.index(gas)
            self.ops[gas] = _interp_matrix(np.asarray(grid), t)
            self.targets[gas] = f
        self.shape = (len(gas_names), len(grid))

    def value_and_flux_grad(self, flux):
        J = 0.0
        dj = np.zeros(self.shape)
        for gas, W in self.ops.items():
            res = W @ flux[self.gas_index[gas]] - self.targets[gas]
            J += 0.5 * float(res @ res)
            dj[self.gas_index[gas]] = W.T @ res
        return J, dj


def j_data(sim: SimulationResult, obs: ExperimentalCurves) -> float:
    """Half the summed squared difference between simulated and observed outlet fluxes."""
    return DataMisfit(sim.times, sim.gas_names, obs).value_and_flux_grad(sim.flux)[0]


@dataclass(frozen=True)
class ThermoConstraint:
    """Overall gas-phase free energy (J/mol) to be matched by a weighted sum of elementary steps."""

    dg_gas: float
    combo: tuple[tuple[int, float], ...]
    alpha: float = 1.0
    temperature: float = 400.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ObjectiveError("alpha must be >= 0")
        if self.alpha > 0 and not self.combo:
            raise ObjectiveError("a thermodynamic constraint with alpha > 0 needs a step combination")


def elementary_free_energy(kf: float, kb: float, temperature: float) -> float:
    """Delta G = -R T ln(kf / kb) in J/mol."""
    if not (kf > 0 and kb > 0):
        raise ObjectiveError("free energy needs positive forward and reverse rate constants")
    return -R_GAS * temperature * math.log(kf / kb)


def combo_free_energy(k: dict[str, float], combo, temperature: float) -> float:
    total = 0.0
    for step, c in combo:
        kb = k.get(param_name(step, "b"))
        if kb is None:
            raise ObjectiveError(f"step {step} is irreversible; thermodynamic constraint is inapplicable")
        total += c * elementary_free_energy(k[param_name(step, "f")], kb, temperature)
    return total


def j_thermo(k: dict[str, float], constraint: ThermoConstraint) -> float:
    """Squared mismatch (kJ/mol)^2 between the overall and the combined elementary free energies."""
    gap = constraint.dg_gas - combo_free_energy(k, constraint.combo, constraint.temperature)
    return (gap / 1000.0) ** 2


def j_thermo_grad(k: dict[str, float], constraint: ThermoConstraint) -> dict[str, float]:
    gap = constraint.dg_gas - combo_free_energy(k, constraint.combo, constraint.temperature)
    rt = R_GAS * constraint.temperature
    grad: dict[str, float] = {}
    for step, c in constraint.combo:
        f, b = param_name(step, "f"), param_name(step, "b")
        # dG_i/dkf = -RT/kf, dG_i/dkb = RT/kb
        grad[f] = grad.get(f, 0.0) + 2 * gap / 1e6 * c * rt / k[f]
        grad[b] = grad.get(b, 0.0) - 2 * gap / 1e6 * c * rt / k[b]
    return grad


def thermo_gap(k: dict[str, float], constraint: ThermoConstraint) -> float:
    """dG_gas - sum c_i dG_i in J/mol."""
    return constraint.dg_gas - combo_free_energy(k, constraint.combo, constraint.temperature)


class TapProblem:
    """Rate-constant estimation problem: a model, observations and an optional thermo penalty.

    ``free`` selects the optimised parameters by name (``"1f"``, ``"2b"``...);
    by default every parameter not marked fixed in the mechanism.
    """

    def __init__(self, model: TapModel, obs: ExperimentalCurves | None = None,
                 thermo: ThermoConstraint | None = None, free=None, k_min: float = K_MIN):
        self.model = model
        self.obs = obs
        self.thermo = thermo
        self.k_min = k_min
        mech = model.mech
        params = mech.rate_params()
        self.all_names = list(params)
        if free is None:
            free = [n for n, p in params.items() if not p.fixed]
        else:
            unknown = [n for n in free if n not in params]
            if unknown:
                raise ObjectiveError(f"unknown parameters {unknown}")
            pinned = [n for n in free if params[n].fixed]
            if pinned:
                raise ObjectiveError(f"parameters {pinned} are marked fixed ('!')")
        self.free = list(free)
        self.units = mech.param_units()
        self._slots = {}
        for st in mech.steps:
            self._slots[param_name(st.index, "f")] = ("f", st.index - 1)
            if st.reversible:
                self._slots[param_name(st.index, "b")] = ("b", st.index - 1)
        self.misfit = DataMisfit(model.times, model.gas_names, obs) if obs is not None else None
        if thermo is not None:
            for step, _ in thermo.combo:
                if param_name(step, "b") not in self._slots:
                    raise ObjectiveError(f"step {step} is irreversible; thermodynamic constraint is inapplicable")
        self.n_forward = 0
        self.n_adjoint = 0

    @property
    def n_params(self) -> int:
        return len(self.free)

    def initial(self) -> np.ndarray:
        return np.array([self.all_k()[n] for n in self.free])

    def all_k(self, values=None) -> dict[str, float]:
        kf, kb = self.rate_vectors(values)
        return {n: float((kf if d == "f" else kb)[i]) for n, (d, i) in self._slots.items()}

    def rate_vectors(self, values=None):
        kf = self.model.kf0.copy()
        kb = self.model.kb0.copy()
        if values is not None:
            values = np.asarray(values, dtype=float)
            if values.shape != (self.n_params,):
                raise ObjectiveError(f"expected {self.n_params} parameter values, got {values.shape}")
            for n, v in zip(self.free, values):
                d, i = self._slots[n]
                (kf if d == "f" else kb)[i] = v
        return kf, kb

    def simulate(self, values=None, tape=False, record_fields=False):
        kf, kb = self.rate_vectors(values)
        self.n_forward += 1
        return self.model.simulate(kf, kb, record_fields=record_fields, tape=tape)

    def _thermo_terms(self, values):
        if self.thermo is None or self.thermo.alpha == 0:
            return 0.0, np.zeros(self.n_params)
        k = self.all_k(values)
        jt = j_thermo(k, self.thermo)
        g = j_thermo_grad(k, self.thermo)
        return self.thermo.alpha * jt, self.thermo.alpha * np.array([g.get(n, 0.0) for n in self.free])

    def data_term(self, result: SimulationResult) -> float:
        if self.misfit is None:
            raise ObjectiveError("no observations attached to the problem")
        return self.misfit.value_and_flux_grad(result.flux)[0]

    def objective(self, values=None) -> float:
        """Combined objective J = J_data + alpha J_thermo."""
        res = self.simulate(values)
        return self.data_term(res) + self._thermo_terms(values)[0]

    def objective_and_gradient(self, values=None):
        """``(J, dJ/dk, result)`` with the data gradient from one adjoint sweep."""
        if self.misfit is None:
            raise ObjectiveError("no observations attached to the problem")
        kf, kb = self.rate_vectors(values)
        res, tape = self.simulate(values, tape=True)
        jd, dj = self.misfit.value_and_flux_grad(res.flux)
        self.n_adjoint += 1
        gkf, gkb = self.model.adjoint(tape, kf, kb, dj)
        grad = np.array([(gkf if self._slots[n][0] == "f" else gkb)[self._slots[n][1]] for n in self.free])
        jt, gt = self._thermo_terms(values)
        return jd + jt, grad + gt, res


def combined_objective(values, problem: TapProblem) -> float:
    return problem.objective(values)


@dataclass
class FitReport:
    names: list[str]
    units: dict[str, str]
    history: list[dict] = field(default_factory=list)  # iteration, J, grad_norm, params
    snapshots: list[np.ndarray] = field(default_factory=list)  # flux per accepted iterate
    converged: bool = False
    message: str = ""
    final: np.ndarray | None = None
    final_gradient: np.ndarray | None = None
    at_bound: list[bool] = field(default_factory=list)
    undetermined: list[bool] = field(default_factory=list)
    fixed: dict[str, float] = field(default_factory=dict)
    n_forward: int = 0
    n_adjoint: int = 0
    times: np.ndarray | None = None
    gas_names: list[str] = field(default_factory=list)

    @property
    def initial_objective(self) -> float:
        return self.history[0]["J"]

    @property
    def final_objective(self) -> float:
        return self.history[-1]["J"]

    def params(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.final)))


LINEAR, LOG, HYBRID = "linear", "log", "hybrid"


@dataclass(frozen=True)
class FitOptions:
    """L-BFGS-B settings.

    ``space`` selects the optimisation variables: raw rate constants
    (``"linear"``), their base-10 logarithms (``"log"``), or a linear phase of at
    most ``linear_iter`` iterations followed by a log phase (``"hybrid"``).  The
    linear phase escapes the flat region around tiny initial guesses; the log
    phase copes with constants spanning several decades.
    """

    max_iter: int = 300
    gtol: float = 1e-10
    ftol: float = 1e-13
    space: str = HYBRID
    linear_iter: int = 40
    k_min: float = K_MIN
    k_max: float | None = None
    snapshots: bool = True
    # relative identifiability threshold for the "undetermined" flag
    determination_tol: float = 1e-6

    def __post_init__(self):
        if self.space not in (LINEAR, LOG, HYBRID):
            raise ValueError(f"unknown parameter space {self.space!r}")
        if self.max_iter < 1 or self.linear_iter < 0:
            raise ValueError("iteration limits must be positive")
        if not self.k_min > 0 or (self.k_max is not None and self.k_max <= self.k_min):
            raise ValueError("need 0 < k_min < k_max")


class _Phase:
    """One L-BFGS-B run in either linear or log10 variables, sharing a report."""

    def __init__(self, problem: TapProblem, report: FitReport, opts: FitOptions, log_space: bool):
        self.problem, self.report, self.opts, self.log_space = problem, report, opts, log_space
        self.cache: dict = {}
        self.last_good: dict = {}
        lo, hi = opts.k_min, opts.k_max
        if log_space:
            self.lower = math.log10(lo)
            self.upper = math.log10(hi) if hi else np.inf
        else:
            self.lower, self.upper = lo, (hi if hi else np.inf)

    def to_k(self, x):
        return 10.0**x if self.log_space else x

    def to_x(self, k):
        return np.log10(k) if self.log_space else np.array(k, dtype=float)

    def evaluate(self, x):
        key = x.tobytes()
        if key in self.cache:
            return self.cache[key]
        k = self.to_k(x)
        try:
            J, g, res = self.problem.objective_and_gradient(k)
            if not (np.isfinite(J) and np.all(np.isfinite(g))):
                raise SolverError("non-finite objective")
        except (SolverError, MechanismError, FloatingPointError) as exc:
            log.warning("forward solve failed during line search: %s", exc)
            if not self.last_good:
                raise OptimizerError(f"forward solve fails at the initial point: {exc}") from exc
            # steep wall pointing back to the last good iterate
            J = 1e6 * max(abs(self.last_good["J"]), 1.0)
            g = -np.sign(self.last_good["x"] - x) * np.maximum(np.abs(self.last_good["g"]), 1.0)
            return J, g, None, k
        if self.log_space:
            g = g * k * math.log(10.0)
        self.cache.clear()
        self.cache[key] = (J, g, res, k)
        self.last_good.update(x=x.copy(), J=J, g=g)
        return J, g, res, k

    def record(self, x):
        J, g, res, k = self.evaluate(x)
        pg = _projected_gradient(x, g, self.lower, self.upper)
        rep = self.report
        rep.history.append({"iteration": len(rep.history), "J": float(J),
                            "grad_norm": float(np.max(np.abs(pg), initial=0.0)), "params": k.copy(),
                            "space": LOG if self.log_space else LINEAR})
        if self.opts.snapshots and res is not None:
            rep.snapshots.append(res.flux.copy())
        log.info("iter %d  J=%.6e  |pg|=%.3e", len(rep.history) - 1, J, rep.history[-1]["grad_norm"])

    def run(self, k0, max_iter: int, first: bool):
        x0 = np.clip(self.to_x(k0), self.lower, self.upper)
        if first:
            self.record(x0)
        n = len(x0)
        bounds = [(self.lower, None if not np.isfinite(self.upper) else self.upper)] * n
        return minimize(lambda x: self.evaluate(x)[:2], x0, jac=True, method="L-BFGS-B", bounds=bounds,
                        callback=self.record,
                        options={"maxiter": max_iter, "gtol": self.opts.gtol, "ftol": self.opts.ftol,
                                 "maxcor": 20})


def fit_parameters(problem: TapProblem, k0=None, options: FitOptions | None = None) -> FitReport:
    """Bound-constrained L-BFGS fit of the free rate constants using adjoint gradients."""
    opts = options or FitOptions()
    k0 = problem.initial() if k0 is None else np.asarray(k0, dtype=float)
    if k0.shape != (problem.n_params,):
        raise ObjectiveError(f"expected {problem.n_params} initial values, got {k0.shape}")
    k0 = np.clip(k0, opts.k_min, opts.k_max if opts.k_max else np.inf)

    report = FitReport(problem.free, {n: problem.units[n] for n in problem.free},
                       times=problem.model.times, gas_names=problem.model.gas_names)
    report.fixed = {n: v for n, v in problem.all_k().items() if n not in problem.free}
    if opts.space == HYBRID:
        plan = [(False, min(opts.linear_iter, opts.max_iter)), (True, opts.max_iter)]
        plan = [(s, m) for s, m in plan if m > 0]
    else:
        plan = [(opts.space == LOG, opts.max_iter)]

    k, sol, used = k0, None, 0
    for i, (log_space, limit) in enumerate(plan):
        limit = min(limit, opts.max_iter - used)
        if limit <= 0:
            break
        sol = _Phase(problem, report, opts, log_space).run(k, limit, first=(i == 0))
        used += sol.nit
        k = min(report.history, key=lambda h: h["J"])["params"]
        log.info("%s phase: %d iterations, %s", "log" if log_space else "linear", sol.nit, sol.message)

    best = min(report.history, key=lambda h: h["J"])
    if report.history[-1]["J"] > best["J"]:
        report.history.append(dict(best, iteration=len(report.history)))
    report.final = report.history[-1]["params"].copy()
    report.converged = bool(sol.success)
    report.message = str(sol.message)
    J, g, _ = problem.objective_and_gradient(report.final)
    report.final_gradient = g
    report.at_bound = [bool(v <= opts.k_min * (1 + 1e-6)) for v in report.final]
    report.n_forward = problem.n_forward
    report.n_adjoint = problem.n_adjoint
    report.undetermined = list(report.at_bound)
    return report


def _projected_gradient(x, g, lower, upper):
    pg = g.copy()
    pg[(x <= lower) & (g > 0)] = 0.0
    pg[(x >= upper) & (g < 0)] = 0.0
    return pg


def assess_determination(report: FitReport, hessian: np.ndarray, tol: float | None = None) -> list[bool]:
    """Flag parameters that sit at the lower bound or barely influence the objective.

    Influence is measured by the relative curvature ``k_i^2 H_ii`` compared with
    the best-determined parameter.
    """
    tol = FitOptions().determination_tol if tol is None else tol
    k = report.final
    curv = np.abs(np.diag(hessian)) * k**2
    top = np.max(curv) if curv.size else 0.0
    flags = [bool(b or top == 0 or c < tol * top) for b, c in zip(report.at_bound, curv)]
    report.undetermined = flags
    return flags
