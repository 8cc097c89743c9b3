"""Command-line entry points: simulate, fit, sensitivity, hessian, reference, benchmark."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io as tio
from .inverse import (HYBRID, LINEAR, LOG, ExperimentalCurves, FitOptions, OptimizerError,
                      TapProblem, assess_determination, fit_parameters, thermo_gap)
from .reactor import build_mesh
from .reference import SeriesConfig, irreversible_adsorption_curve
from .sensitivity import REL_STEPS, adjoint_gradient, fd_gradient, hessian, time_resolved_sensitivity
from .solver import IMPLICIT, SEMI_IMPLICIT, SolverError, TapModel

log = logging.getLogger("tapwb")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_OPTIMIZER = 0, 2, 3, 4
SCHEMES = {"semi": SEMI_IMPLICIT, "implicit": IMPLICIT}


def _model(defn: tio.ExperimentDefinition, args, mech=None) -> TapModel:
    mesh = build_mesh(defn.reactor, defn.mesh_size, defn.catalyst_density)
    cfg = defn.solver_config(args.time, args.pulses, SCHEMES[args.scheme])
    return TapModel(mech or defn.mechanism, defn.reactor, mesh, defn.schedule(args.pulses), defn.surface0, cfg)


def _output_root(defn, args) -> Path:
    return Path(args.output or defn.output_folder)


def _start(args):
    """Load the input and create the output tree (with the input copy) before any computation."""
    defn = tio.load_input(args.input)
    root = tio.prepare_output(_output_root(defn, args), input_path=args.input)
    return defn, root


def _observations(defn, args, model: TapModel, root: Path) -> ExperimentalCurves:
    """Synthetic data from ``--truth`` (plus ``--noise``) or the input's experimental data folder."""
    gases = model.gas_names
    if args.truth:
        truth_defn = tio.load_input(args.truth)
        truth = _model(defn, args, mech=truth_defn.mechanism)
        res = truth.simulate(record_fields=False)
        obs = ExperimentalCurves.from_result(res, gases, noise=args.noise, seed=args.seed)
        for g, (t, f) in obs.curves.items():
            tio.write_table(root / "synthetic_data" / f"{g}.csv", ["time_s", "flux_nmol_per_s"],
                            np.column_stack([t, f]))
        return obs
    if not defn.data_folder:
        raise tio.InputError("no experimental data: set 'Experimental Data Folder' or pass --truth")
    folder = Path(defn.data_folder)
    if not folder.is_absolute() and defn.source is not None:
        folder = defn.source.parent / folder
    obs = tio.load_experimental(folder, gases)
    if args.noise:
        rng = np.random.default_rng(args.seed)
        obs = ExperimentalCurves({g: (t, f + rng.normal(0.0, args.noise * np.max(np.abs(f)), f.shape))
                                  for g, (t, f) in obs.curves.items()}, noise_sigma=args.noise)
    return obs


def _problem(defn, args, model, obs) -> TapProblem:
    thermo = defn.thermo(args.alpha) if args.alpha and defn.mechanism.thermo_combo else None
    if args.alpha and thermo is None:
        log.warning("--alpha given but the input has no thermodynamic combination; ignored")
    return TapProblem(model, obs, thermo)


# -- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    defn, root = _start(args)
    model = _model(defn, args)
    res = model.simulate()
    tio.write_simulation(res, root)
    tio.write_mass_balance(res, root)
    tio.emit_plot_data(res, root, pulses=args.plot_pulses)
    worst = max(abs(b["residual"]) / max(b["injected"] + abs(b["produced"]), 1e-300)
                for b in res.mass_balance.values())
    log.info("simulated %d steps (%d halvings); worst relative mass-balance residual %.2e",
             model.config.n_steps, res.n_halvings, worst)
    return EXIT_OK


def cmd_fit(args) -> int:
    defn, root = _start(args)
    model = _model(defn, args)
    obs = _observations(defn, args, model, root)
    problem = _problem(defn, args, model, obs)
    opts = FitOptions(max_iter=args.max_iter, space=args.space)
    report = fit_parameters(problem, problem.initial(), opts)
    if not args.no_hessian:
        H = hessian(problem, report.final)
        assess_determination(report, H.matrix)
        tio.write_hessian(problem.free, H.matrix, root)
    tio.write_fit(report, root)
    res = problem.simulate(report.final, record_fields=True)
    tio.write_simulation(res, root)
    tio.emit_plot_data(res, root, obs=obs, pulses=args.plot_pulses)
    msg = "fit finished: J %.6e -> %.6e (%s)" % (report.initial_objective, report.final_objective, report.message)
    if problem.thermo is not None:
        msg += "; thermodynamic gap %.3f kJ/mol" % (thermo_gap(problem.all_k(report.final), problem.thermo) / 1000)
    log.info(msg)
    for n, v, u in zip(report.names, report.final, report.undetermined):
        log.info("  %-4s %.6e %s%s", n, v, report.units[n], "  (undetermined)" if u else "")
    if not np.isfinite(report.final_objective):
        raise OptimizerError("optimizer ended with a non-finite objective")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    defn, root = _start(args)
    model = _model(defn, args)
    obs = _observations(defn, args, model, root)
    problem = _problem(defn, args, model, obs)
    k = problem.initial()
    if args.sens_type == "transient":
        sens = time_resolved_sensitivity(problem, k)
        tio.write_time_sensitivity(sens.times, problem.free, sens.time_resolved, problem.units, root)
        grad = sens.gradient + problem._thermo_terms(k)[1]
    else:
        grad = adjoint_gradient(problem, k).gradient
    tio.write_gradient(problem.free, grad, problem.units, root)
    if args.fd:
        cols = {name: fd_gradient(problem, k, step).gradient for name, step in REL_STEPS.items()}
        tio.write_fd_table(problem.free, cols, grad, root)
    for n, g in zip(problem.free, grad):
        log.info("  dJ/d%-4s = % .6e", n, g)
    return EXIT_OK


def cmd_hessian(args) -> int:
    defn, root = _start(args)
    model = _model(defn, args)
    obs = _observations(defn, args, model, root)
    problem = _problem(defn, args, model, obs)
    H = hessian(problem, problem.initial())
    tio.write_hessian(problem.free, H.matrix, root)
    log.info("hessian with %d gradient evaluations; symmetry defect %.2e", H.gradient_evaluations,
             H.symmetry_defect)
    return EXIT_OK


def cmd_reference(args) -> int:
    from .problems import adsorption_model, diffusion_model

    root = Path(args.output or "reference_results")
    (root / "plots").mkdir(parents=True, exist_ok=True)
    cfg = SeriesConfig()
    for ka in args.ka:
        model = (adsorption_model(ka, cfg, args.time or 3.0, args.steps) if ka > 0
                 else diffusion_model(cfg, args.time or 3.0, args.steps))
        res = model.simulate(record_fields=False)
        sim = res.flux[0] / cfg.intensity
        ana = irreversible_adsorption_curve(res.times, SeriesConfig(adsorption=ka))
        err = float(np.max(np.abs(sim - ana)) / np.max(ana))
        tio.emit_reference_overlay(res.times, ana, sim, root, name=f"reference_ka{ka:g}")
        log.info("k_a' = %g: max error %.3e of the analytical peak", ka, err)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    defn, root = _start(args)
    model = _model(defn, args)
    res = model.simulate(record_fields=False)
    obs = ExperimentalCurves.from_result(res, noise=0.02, seed=args.seed)
    names = TapProblem(model, obs).free
    rows = []
    for n in range(1, min(args.max_params, len(names)) + 1):
        problem = TapProblem(model, obs, free=names[:n])
        k = problem.initial()
        fwd = _best_time(lambda: problem.objective(k), args.repeats)
        adj = _best_time(lambda: adjoint_gradient(problem, k), args.repeats)
        fd = _best_time(lambda: fd_gradient(problem, k), 1)
        rows.append([n, fwd, adj, fd, adj / fwd, fd / fwd])
        log.info("n=%d  forward %.3f s  adjoint %.3f s (%.2fx)  fd %.3f s (%.1fx)", n, fwd, adj, adj / fwd,
                 fd, fd / fwd)
    (root / "benchmark").mkdir(exist_ok=True)
    tio.write_records(root / "benchmark" / "timing.csv",
                      ["n_params", "forward_s", "adjoint_s", "fd_s", "adjoint_over_forward", "fd_over_forward"],
                      rows)
    return EXIT_OK


def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return float(best)


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tapwb", description="TAP reactor simulation and kinetic fitting workbench")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True):
        if needs_input:
            sp.add_argument("--input", required=True, help="input CSV file")
        sp.add_argument("--output", help="output folder (overrides the input's Output Folder)")
        sp.add_argument("--time", type=float, help="simulated time per pulse (s)")
        sp.add_argument("--pulses", type=int, help="number of pulses")
        sp.add_argument("--scheme", choices=sorted(SCHEMES), default="semi", help="time stepping scheme")
        sp.add_argument("--seed", type=int, default=0, help="seed for synthetic noise")

    def data(sp):
        sp.add_argument("--truth", help="input file whose rate constants generate synthetic data")
        sp.add_argument("--noise", type=float, default=0.0, help="Gaussian noise, fraction of each gas's peak")
        sp.add_argument("--alpha", type=float, default=0.0, help="weight of the thermodynamic penalty")

    s = sub.add_parser("simulate", help="forward simulation")
    common(s)
    s.add_argument("--plot-pulses", type=int, nargs="*", help="1-based pulses to emit plot data for")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit rate constants to data")
    common(s)
    data(s)
    s.add_argument("--max-iter", type=int, default=300)
    s.add_argument("--space", choices=(HYBRID, LINEAR, LOG), default=HYBRID)
    s.add_argument("--no-hessian", action="store_true", help="skip the identifiability assessment")
    s.add_argument("--plot-pulses", type=int, nargs="*")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("sensitivity", help="adjoint gradient of the objective")
    common(s)
    data(s)
    s.add_argument("--sens-type", choices=("total", "transient"), default="total")
    s.add_argument("--fd", action="store_true", help="also tabulate central differences at 1/50, 1/500, 1/5000")
    s.set_defaults(func=cmd_sensitivity)

    s = sub.add_parser("hessian", help="Hessian of the objective from differenced adjoint gradients")
    common(s)
    data(s)
    s.set_defaults(func=cmd_hessian)

    s = sub.add_parser("reference", help="compare simulations with the analytical pulse responses")
    common(s, needs_input=False)
    s.add_argument("--ka", type=float, nargs="+", default=[0.0, 1.0, 3.0], help="adsorption numbers")
    s.add_argument("--steps", type=int, default=3000)
    s.set_defaults(func=cmd_reference)

    s = sub.add_parser("benchmark", help="adjoint vs finite-difference gradient timing")
    common(s)
    s.add_argument("--max-params", type=int, default=8)
    s.add_argument("--repeats", type=int, default=2)
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (OptimizerError, SolverError, ValueError, OSError) as exc:
        code = (EXIT_OPTIMIZER if isinstance(exc, OptimizerError)
                else EXIT_SOLVER if isinstance(exc, SolverError) else EXIT_INPUT)
        print(f"error [{type(exc).__module__}]: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
