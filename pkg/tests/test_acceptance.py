"""Acceptance criteria 1-8 plus the noisy synthetic fit.

Every test records one ``CRITERION ...: PASS|FAIL`` line (printed in the
terminal summary, or directly when this file is run as a script) and then
asserts the criterion, so failures are reported rather than hidden.
"""

import filecmp
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from tapwb import io as tio
from tapwb.cli import main
from tapwb.inverse import ExperimentalCurves, FitOptions, assess_determination, fit_parameters, thermo_gap
from tapwb.problems import (CO_OXIDATION_REPORTED, CaseSetup, adsorption_model, co_oxidation_mechanism,
                            co_oxidation_problem, diffusion_model, serial_problem)
from tapwb.reactor import ReactorSpec, build_mesh
from tapwb.reference import SeriesConfig, diffusion_curve, irreversible_adsorption_curve
from tapwb.sensitivity import adjoint_gradient, fd_gradient, hessian
from tapwb.solver import PulseSchedule, SolverConfig, TapModel

pytestmark = pytest.mark.slow

INPUTS = Path(__file__).resolve().parents[1] / "inputs"
RESULTS: dict[str, str] = {}


def report(key: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {key}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS[key] = line
    print(line, flush=True)
    assert ok, line


# -- 1, 2: analytical validation -----------------------------------------------

def test_criterion_1_diffusion():
    cfg = SeriesConfig()
    t0 = time.perf_counter()
    res = diffusion_model(cfg, total_time=3.0, n_steps=3000, mesh_size=200).simulate(record_fields=False)
    wall = time.perf_counter() - t0
    ana = diffusion_curve(res.times, cfg)
    err = np.max(np.abs(res.flux_of("Ar") - ana)) / ana.max()
    integral = np.trapezoid(res.flux_of("Ar"), res.times) / cfg.intensity
    ok = err < 1e-2 and abs(integral - 1) < 5e-3 and wall < 30
    report("1", ok, f"L_inf error {err:.2e} of peak (<1e-2), integral/N_p {integral:.5f} (+-0.5%), "
                    f"runtime {wall:.1f} s (<30 s)")


def test_criterion_2_adsorption():
    parts, ok = [], True
    base = diffusion_model(SeriesConfig(), 3.0, 3000).simulate(record_fields=False)
    zero = adsorption_model(0.0).simulate(record_fields=False)
    t = base.times
    same_path = np.array_equal(irreversible_adsorption_curve(t, SeriesConfig()), diffusion_curve(t, SeriesConfig()))
    same_sim = np.array_equal(zero.flux[0], base.flux[0])
    ok &= same_path and same_sim
    parts.append(f"k_a'=0 identical to diffusion: series {same_path}, solver {same_sim}")
    for ka in (1.0, 3.0):
        cfg = SeriesConfig(adsorption=ka)
        res = adsorption_model(ka, cfg).simulate(record_fields=False)
        ana = irreversible_adsorption_curve(res.times, cfg)
        err = np.max(np.abs(res.flux_of("A") - ana)) / ana.max()
        ok &= err < 1e-2
        parts.append(f"k_a'={ka:g}: error {err:.2e} of peak")
    report("2", ok, "; ".join(parts))


# -- 3: gradient correctness ------------------------------------------------------

def test_criterion_3_gradients():
    problem, _, _ = co_oxidation_problem()
    k_conv = np.array([CO_OXIDATION_REPORTED[n] for n in problem.free])
    adj = adjoint_gradient(problem, k_conv).gradient
    fd = fd_gradient(problem, k_conv, 1 / 5000).gradient
    checked = np.abs(adj) > 1e-6 * np.abs(adj).max()
    rel = np.abs(fd - adj) / np.abs(adj)
    bad = [n for n, c, r in zip(problem.free, checked, rel) if c and r > 1e-2]
    part_a = not bad

    k0 = problem.initial()
    adj0 = dict(zip(problem.free, adjoint_gradient(problem, k0).gradient))
    fd0 = dict(zip(problem.free, fd_gradient(problem, k0, 1 / 5000).gradient))
    part_b = all(adj0[n] != 0 and fd0[n] == 0 for n in ("1f", "2f"))

    detail = (f"converged set: {int(checked.sum())} checked, mismatched {bad or 'none'} "
              + " ".join(f"[{n}: adj {adj[i]:.3e} fd {fd[i]:.3e}]" for i, n in enumerate(problem.free)
                         if n in bad)
              + f"; initial guess: adj 1f {adj0['1f']:.3e} 2f {adj0['2f']:.3e}, "
                f"fd 1f {fd0['1f']:.3e} 2f {fd0['2f']:.3e} (required fd == 0)")
    report("3", part_a and part_b, detail)


# -- 4 and the noisy variant: synthetic inverse problem -------------------------------

def _co_fit(noise):
    problem, obs, truth = co_oxidation_problem(noise=noise, seed=0)
    t0 = time.perf_counter()
    rep = fit_parameters(problem)
    H = hessian(problem, rep.final)
    assess_determination(rep, H.matrix)
    return problem, obs, truth, rep, H, time.perf_counter() - t0


def test_criterion_4_synthetic_fit():
    problem, _, truth, rep, H, wall = _co_fit(0.0)
    ratio = rep.final_objective / rep.initial_objective
    true = dict(zip(problem.free, truth))
    fit = rep.params()
    errs = {n: abs(fit[n] - true[n]) / true[n] for n in ("1f", "2f", "3f", "4f")}
    flags = dict(zip(rep.names, rep.undetermined))
    ok = ratio <= 1e-4 and max(errs.values()) <= 0.25 and flags["2b"] and flags["4b"] and wall < 1800
    report("4", ok, f"J ratio {ratio:.2e} (<=1e-4), errors "
                    + ", ".join(f"{n} {e:.1%}" for n, e in errs.items())
                    + f", undetermined {[n for n, u in flags.items() if u]}, "
                      f"Hessian symmetry defect {H.symmetry_defect:.1e}, {wall:.0f} s")


def test_criterion_noisy_fit():
    problem, obs, truth, rep, _, wall = _co_fit(0.02)
    ratio = rep.final_objective / rep.initial_objective
    floor = problem.objective(np.maximum(truth, problem.k_min)) / rep.initial_objective
    report("4-noisy", ratio <= 1e-2,
           f"sigma 2% of peak: J ratio {ratio:.3e} (target <=1e-2); the true constants themselves give "
           f"{floor:.3e} against the noisy data (noise floor), {wall:.0f} s")


# -- 5: thermodynamic consistency -------------------------------------------------------

def test_criterion_5_thermo():
    out = {}
    for alpha in (0.0, 1.0):
        problem = serial_problem(alpha, noise=0.02, seed=0)
        rep = fit_parameters(problem)
        res = problem.simulate(rep.final)
        out[alpha] = (problem.data_term(res), thermo_gap(problem.all_k(rep.final), problem.thermo))
    (jd0, gap0), (jd1, gap1) = out[0.0], out[1.0]
    ok = abs(gap1) < 1000.0 and jd1 <= 2 * jd0
    report("5", ok, f"alpha=1 gap {gap1 / 1000:.2e} kJ/mol (<1), J_data {jd1:.5g} vs unconstrained {jd0:.5g} "
                    f"(<=2x); unconstrained gap {gap0 / 1000:.1f} kJ/mol")


# -- 6: mesh refinement economy -------------------------------------------------------------

def test_criterion_6_mesh():
    spec = ReactorSpec(zone_lengths=(2.94, 0.12, 2.94))  # catalyst occupies 2% of the bed
    refined = build_mesh(spec, 200, 4)
    uniform = build_mesh(spec, 2500, 0)
    sched = PulseSchedule(("CO", "O2", "CO2"), (5.0, 5.0, 0.0), (0.0, 0.0, 0.0), (28.0, 32.0, 44.0))
    cfg = SolverConfig(1.0, 1000)
    runs = {}
    for name, mesh in (("refined", refined), ("uniform", uniform)):
        model = TapModel(co_oxidation_mechanism(), spec, mesh, sched, {"*": 12.0}, cfg)
        t0 = time.perf_counter()
        res = model.simulate(record_fields=False)
        runs[name] = (res, time.perf_counter() - t0)
    (r, tr), (u, tu) = runs["refined"], runs["uniform"]
    errs = []
    for g in ("CO", "O2", "CO2"):
        fu = u.flux_of(g)
        after = np.arange(len(fu)) >= np.argmax(fu)
        errs.append(np.max(np.abs(r.flux_of(g) - fu)[after]) / fu.max())
    counts_ok = refined.n_cells == 264 and refined.catalyst_cells == 64
    ok = counts_ok and max(errs) < 1e-2 and tr < tu
    report("6", ok, f"refined mesh {refined.n_cells} cells ({refined.catalyst_cells} catalyst; required 264/64, "
                    f"200 - 4 + 64 = 260), L_inf after peak {max(errs):.1e} of peak (<1e-2), "
                    f"wall {tr:.2f} s vs uniform-2500 {tu:.2f} s")


# -- 7: gradient cost scaling ----------------------------------------------------------------

def test_criterion_7_cost(tmp_path):
    assert main(["benchmark", "--input", str(INPUTS / "co_oxidation.csv"), "--output", str(tmp_path),
                 "--repeats", "2"]) == 0
    data = np.loadtxt(tmp_path / "benchmark" / "timing.csv", delimiter=",", skiprows=1)
    n, adj_ratio, fd = data[:, 0], data[:, 4], data[:, 3]
    slope, icept = np.polyfit(n, fd, 1)
    r2 = np.corrcoef(n, fd)[0, 1] ** 2
    ok = np.all(adj_ratio <= 5) and slope > 0 and r2 >= 0.9 and len(n) == 8
    report("7", ok, f"adjoint/forward {adj_ratio.min():.2f}-{adj_ratio.max():.2f} (<=5) for n=1..{int(n[-1])}; "
                    f"FD time linear in n (R^2 {r2:.3f}, {slope:.3f} s per parameter)")


# -- 8: determinism and IO -------------------------------------------------------------------

def _identical_trees(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    match, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(_identical_trees(a / d, b / d) for d in cmp.common_dirs)


def test_criterion_8_determinism(tmp_path):
    src = INPUTS / "co_oxidation.csv"
    truth = INPUTS / "co_oxidation_truth.csv"
    runs = {
        "simulate": ["simulate", "--input", str(src)],
        "sensitivity": ["sensitivity", "--input", str(src), "--truth", str(truth), "--noise", "0.02",
                        "--seed", "7", "--sens-type", "transient"],
    }
    identical, copies = True, True
    for name, argv in runs.items():
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{name}_{rep}"
            assert main(argv + ["--output", str(out)]) == 0
            copies &= (out / src.name).read_bytes() == src.read_bytes()
            outs.append(out)
        identical &= _identical_trees(*outs)
    trips = []
    for p in sorted(INPUTS.glob("*.csv")):
        d = tio.load_input(p)
        again = tio.parse_input(tio.format_input(d))
        trips.append(again == d and tio.format_input(again) == tio.format_input(d))
    ok = identical and copies and all(trips)
    report("8", ok, f"byte-identical reruns {identical}, input copy in every tree {copies}, "
                    f"round-trip lossless for {sum(trips)}/{len(trips)} input files")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
