"""Canned experiments: analytical validation cases, synthetic CO oxidation and a serial mechanism."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inverse import ExperimentalCurves, TapProblem, ThermoConstraint, elementary_free_energy
from .mechanism import Mechanism
from .reactor import ReactorSpec, build_mesh
from .reference import SeriesConfig
from .solver import PulseSchedule, SolverConfig, TapModel

CO_OXIDATION = (
    ("CO + * <-> CO*", 1.5, 0.15),
    ("O2 + 2* <-> 2O*", 5e-3, 0.0),
    ("CO* + O* <-> CO2 + 2*", 10.5, 1.5e-2),
    ("CO + O* <-> CO2 + *", 20.2, 0.0),
)
CO_OXIDATION_MASSES = {"CO": 28.0, "O2": 32.0, "CO2": 44.0}
# converged values reported alongside the synthetic CO-oxidation fit
CO_OXIDATION_REPORTED = {"1f": 1.48, "1b": 3.25e-5, "2f": 4.70e-3, "2b": 1.00e-10,
                         "3f": 10.4, "3b": 6.10e-3, "4f": 25.0, "4b": 5.28e-3}


def co_oxidation_mechanism(values=None, guess: float | None = None) -> Mechanism:
    """Eley-Rideal + Langmuir-Hinshelwood CO oxidation.

    ``values`` maps parameter names to rate constants (defaults: the synthetic
    truth); ``guess`` sets every constant to one value instead.
    """
    rows = []
    for m, (eq, kf, kb) in enumerate(CO_OXIDATION, start=1):
        if guess is not None:
            kf = kb = guess
        elif values:
            kf = values.get(f"{m}f", kf)
            kb = values.get(f"{m}b", kb)
        rows.append((eq, [repr(float(kf)), repr(float(kb))]))
    return Mechanism.from_lines(rows, CO_OXIDATION_MASSES)


@dataclass(frozen=True)
class CaseSetup:
    """Numerical settings of a canned case."""

    total_time: float = 1.0
    n_steps: int = 1000
    mesh_size: int = 200
    catalyst_density: int = 4
    scheme: str = "semi_implicit"


def co_oxidation_model(mech: Mechanism, setup: CaseSetup = CaseSetup(), intensity: float = 5.0,
                       sites: float = 12.0) -> TapModel:
    """Default three-zone reactor, CO and O2 pulsed together onto a clean surface."""
    reactor = ReactorSpec()
    mesh = build_mesh(reactor, setup.mesh_size, setup.catalyst_density)
    sched = PulseSchedule(("CO", "O2", "CO2"), (intensity, intensity, 0.0), (0.0, 0.0, 0.0), (28.0, 32.0, 44.0))
    cfg = SolverConfig(setup.total_time, setup.n_steps, setup.scheme)
    return TapModel(mech, reactor, mesh, sched, {"*": sites}, cfg)


def co_oxidation_problem(setup: CaseSetup = CaseSetup(), guess: float = 1e-10, noise: float = 0.0,
                         seed: int | None = 0) -> tuple[TapProblem, ExperimentalCurves, np.ndarray]:
    """Synthetic fitting problem: data at the true constants, model at a uniform guess.

    Returns the problem, the observations and the true values of the free parameters.
    """
    truth = co_oxidation_model(co_oxidation_mechanism(), setup)
    obs = ExperimentalCurves.from_result(truth.simulate(record_fields=False), noise=noise, seed=seed)
    problem = TapProblem(co_oxidation_model(co_oxidation_mechanism(guess=guess), setup), obs)
    true_k = dict(zip(truth.mech.param_names(), _all_k(truth)))
    return problem, obs, np.array([true_k[n] for n in problem.free])


def _all_k(model: TapModel):
    out = []
    for st in model.mech.steps:
        out.append(model.kf0[st.index - 1])
        if st.reversible:
            out.append(model.kb0[st.index - 1])
    return out


# -- serial mechanism with a thermodynamic cycle ------------------------------

SERIAL = (
    ("A + * <-> A*", 2.0, 0.5),
    ("A* <-> B*", 5.0, 1.0),
    ("B* <-> B + *", 3.0, 0.6),
)
SERIAL_MASSES = {"A": 40.0, "B": 40.0}
SERIAL_COMBO = "r1 + r2 + r3"


def serial_mechanism(values=None, guess: float | None = None) -> Mechanism:
    rows = []
    for m, (eq, kf, kb) in enumerate(SERIAL, start=1):
        if guess is not None:
            kf = kb = guess
        elif values:
            kf = values.get(f"{m}f", kf)
            kb = values.get(f"{m}b", kb)
        rows.append((eq, [repr(float(kf)), repr(float(kb))]))
    return Mechanism.from_lines(rows, SERIAL_MASSES, SERIAL_COMBO)


def serial_dg_gas(temperature: float = 400.0) -> float:
    """Overall A -> B free energy (J/mol) implied by the true rate constants."""
    return sum(elementary_free_energy(kf, kb, temperature) for _, kf, kb in SERIAL)


def serial_problem(alpha: float, setup: CaseSetup = CaseSetup(total_time=2.0, n_steps=1000),
                   guess: float = 1.0, sites: float = 1.0, noise: float = 0.0, seed: int | None = 0):
    """A pulse of A over a serial A -> A* -> B* -> B chain, optionally thermo-constrained."""
    reactor = ReactorSpec()
    mesh = build_mesh(reactor, setup.mesh_size, setup.catalyst_density)
    sched = PulseSchedule(("A", "B"), (1.0, 0.0), (0.0, 0.0), (40.0, 40.0))
    cfg = SolverConfig(setup.total_time, setup.n_steps, setup.scheme)
    truth = TapModel(serial_mechanism(), reactor, mesh, sched, {"*": sites}, cfg)
    obs = ExperimentalCurves.from_result(truth.simulate(record_fields=False), noise=noise, seed=seed)
    model = TapModel(serial_mechanism(guess=guess), reactor, mesh, sched, {"*": sites}, cfg)
    thermo = ThermoConstraint(serial_dg_gas(reactor.temperature), model.mech.thermo_combo, alpha,
                              reactor.temperature)
    return TapProblem(model, obs, thermo)


# -- analytical validation cases ---------------------------------------------

def single_zone_reactor(cfg: SeriesConfig = SeriesConfig(), inert_fraction: float = 0.005) -> ReactorSpec:
    """A reactor whose three zones share void fraction and diffusivity, i.e. one uniform bed.

    The catalyst zone spans all but ``inert_fraction`` of each end so that
    adsorption acts (almost) everywhere.
    """
    L = cfg.length
    ends = inert_fraction * L
    return ReactorSpec((ends, L - 2 * ends, ends), (cfg.void,) * 3, radius=1.0, temperature=400.0,
                       ref_diffusion_inert=cfg.diffusion, ref_diffusion_catalyst=cfg.diffusion,
                       ref_temperature=400.0, ref_mass=40.0)


def diffusion_model(cfg: SeriesConfig = SeriesConfig(), total_time: float = 3.0, n_steps: int = 3000,
                    mesh_size: int = 200) -> TapModel:
    """Inert tracer pulse through a uniform bed (mass equals the reference mass, so D is unscaled)."""
    reactor = single_zone_reactor(cfg)
    sched = PulseSchedule(("Ar",), (cfg.intensity,), (0.0,), (40.0,))
    return TapModel(Mechanism.from_lines([]), reactor, build_mesh(reactor, mesh_size, 0), sched, {},
                    SolverConfig(total_time, n_steps))


def adsorption_model(adsorption_number: float, cfg: SeriesConfig = SeriesConfig(), total_time: float = 3.0,
                     n_steps: int = 3000, mesh_size: int = 200, sites: float = 1000.0) -> TapModel:
    """Irreversible ``A + * -> A*`` with abundant sites, sized to give ``adsorption_number``."""
    reactor = single_zone_reactor(cfg)
    k = adsorption_number * cfg.diffusion / (sites * cfg.length**2)
    mech = Mechanism.from_lines([("A + * -> A*", [repr(k)])], {"A": 40.0})
    sched = PulseSchedule(("A",), (cfg.intensity,), (0.0,), (40.0,))
    return TapModel(mech, reactor, build_mesh(reactor, mesh_size, 0), sched, {"*": sites},
                    SolverConfig(total_time, n_steps))
