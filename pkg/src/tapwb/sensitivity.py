"""Parameter sensitivities: adjoint gradients, central differences and Hessians."""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FD_FLOOR = 1e-14
REL_STEPS = {"1/50": 1 / 50, "1/500": 1 / 500, "1/5000": 1 / 5000}


@dataclass(frozen=True)
class ParameterVector:
    """Ordered free rate constants, e.g. ``names=("1f", "1b")``."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.names),):
            raise ValueError("one value per parameter name is required")

    @classmethod
    def from_problem(cls, problem, values=None):
        return cls(tuple(problem.free), problem.initial() if values is None else values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


@dataclass
class SensitivityResult:
    names: list[str]
    gradient: np.ndarray
    objective: float = float("nan")
    time_resolved: dict[str, np.ndarray] = field(default_factory=dict)  # gas -> (n_times, n_params)
    times: np.ndarray | None = None
    wall_time: float = 0.0


def _values(k):
    return k.values if isinstance(k, ParameterVector) else np.asarray(k, dtype=float)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("TAPWB_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def adjoint_gradient(problem, k) -> SensitivityResult:
    """dJ/dk for every free parameter from one forward and one reverse sweep."""
    t0 = time.perf_counter()
    J, g, _ = problem.objective_and_gradient(_values(k))
    return SensitivityResult(list(problem.free), g, J, wall_time=time.perf_counter() - t0)


def fd_steps(values, rel_step) -> np.ndarray:
    rel = REL_STEPS.get(rel_step, rel_step) if isinstance(rel_step, str) else rel_step
    return np.maximum(float(rel) * np.abs(values), FD_FLOOR)


def fd_gradient(problem, k, rel_step=1 / 5000) -> SensitivityResult:
    """Central differences with a step proportional to each parameter (2n forward solves)."""
    t0 = time.perf_counter()
    x = _values(k)
    h = fd_steps(x, rel_step)

    def column(i):
        xp, xm = x.copy(), x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        return (problem.objective(xp) - problem.objective(xm)) / (2 * h[i])

    g = np.array(_map(column, range(len(x))))
    return SensitivityResult(list(problem.free), g, wall_time=time.perf_counter() - t0)


def time_resolved_sensitivity(problem, k, gases=None) -> SensitivityResult:
    """dF_gas(t_j)/dk_i for every output time, via one forward tangent sweep over all parameters."""
    t0 = time.perf_counter()
    x = _values(k)
    model = problem.model
    kf, kb = problem.rate_vectors(x)
    res, tape = problem.simulate(x, tape=True)
    n = len(x)
    dkf = np.zeros((len(kf), n))
    dkb = np.zeros((len(kb), n))
    for j, name in enumerate(problem.free):
        d, i = problem._slots[name]
        (dkf if d == "f" else dkb)[i, j] = 1.0
    dflux = model.tangent(tape, kf, kb, dkf, dkb)
    gases = list(gases or model.gas_names)
    out = {g: dflux[model.gas_names.index(g)] for g in gases}
    grad = np.zeros(n)
    J = float("nan")
    if problem.misfit is not None:
        J, dj = problem.misfit.value_and_flux_grad(res.flux)
        grad = np.einsum("gtp,gt->p", dflux, dj)
    return SensitivityResult(list(problem.free), grad, J, out, res.times, time.perf_counter() - t0)


@dataclass
class HessianResult:
    names: list[str]
    matrix: np.ndarray
    symmetry_defect: float
    gradient_evaluations: int
    wall_time: float


def hessian(problem, k, rel_step=1 / 5000) -> HessianResult:
    """Central differences of adjoint gradients, one column per parameter (2n gradients)."""
    t0 = time.perf_counter()
    x = _values(k)
    h = fd_steps(x, rel_step)

    def column(i):
        xp, xm = x.copy(), x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        return (problem.objective_and_gradient(xp)[1] - problem.objective_and_gradient(xm)[1]) / (2 * h[i])

    H = np.column_stack(_map(column, range(len(x)))) if len(x) else np.zeros((0, 0))
    norm = np.linalg.norm(H, np.inf) if H.size else 0.0
    defect = float(np.linalg.norm(H - H.T, np.inf) / norm) if norm > 0 else 0.0
    wall = time.perf_counter() - t0
    log.info("hessian: %d gradient evaluations in %.2f s, symmetry defect %.2e", 2 * len(x), wall, defect)
    return HessianResult(list(problem.free), H, defect, 2 * len(x), wall)
