"""Input-file ingestion, experimental data loading and the output folder tree.

The input file is a CSV with four sections introduced by a header cell
(``Reactor Setup``, ``Feed and Surface Composition``, ``Elementary Reactions``,
``Thermodynamic Consistency``) in any order, separated by blank rows.
"""

from __future__ import annotations

import csv
import difflib
import io
import logging
import math
import shutil
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .inverse import ExperimentalCurves, FitReport, ThermoConstraint
from .mechanism import ADSORBATE, GAS, SITE, Mechanism, species_kind
from .reactor import ReactorSpec
from .solver import PulseSchedule, SimulationResult, SolverConfig

log = logging.getLogger(__name__)

REACTOR, FEED, REACTIONS, THERMO = (
    "Reactor Setup", "Feed and Surface Composition", "Elementary Reactions", "Thermodynamic Consistency")
SECTIONS = (REACTOR, FEED, REACTIONS, THERMO)
DG_KEY = "Delta G gas (J/mol)"
OUTPUT_DIRS = ("flux_data", "thin_data", "sensitivity", "fitting", "uncertainty_quantification")

# key -> (attribute, number of values, kind); kind is "float", "int" or "str"
_REACTOR_KEYS = {
    "Zone Length": ("zone_lengths", 3, "float"),
    "Zone Void": ("zone_voids", 3, "float"),
    "Reactor Radius": ("radius", 1, "float"),
    "Reactor Temperature": ("temperature", 1, "float"),
    "Mesh Size": ("mesh_size", 1, "int"),
    "Catalyst Mesh Density": ("catalyst_density", 1, "int"),
    "Output Folder": ("output_folder", 1, "str"),
    "Experimental Data Folder": ("data_folder", 1, "str"),
    "Reference Diffusion Inert": ("ref_diffusion_inert", 1, "float"),
    "Reference Diffusion Catalyst": ("ref_diffusion_catalyst", 1, "float"),
    "Reference Temperature": ("ref_temperature", 1, "float"),
    "Reference Mass": ("ref_mass", 1, "float"),
    "Pulse Duration": ("pulse_duration", 1, "float"),
    "Time Steps": ("time_steps", 1, "int"),
    "Number of Pulses": ("pulses", 1, "int"),
}
_REQUIRED = ("Zone Length", "Zone Void", "Reactor Radius", "Reactor Temperature", "Mesh Size",
             "Reference Diffusion Inert", "Reference Diffusion Catalyst", "Reference Temperature",
             "Reference Mass")
_FEED_GAS_KEYS = ("Intensity", "Time", "Mass")
_FEED_SURFACE_KEY = "Initial Composition"


class InputError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass
class ExperimentDefinition:
    """Everything needed to run simulations, fits and sensitivity studies."""

    reactor: ReactorSpec
    mesh_size: int
    catalyst_density: int
    feed_gases: list[str]
    intensities: list[float]
    pulse_times: list[float]
    masses: list[float]
    surface0: dict[str, float]
    reactions: list[tuple[str, list[str]]]
    thermo_line: str | None = None
    dg_gas: float | None = None
    output_folder: str = "results"
    data_folder: str | None = None
    pulse_duration: float = 1.0  # s per pulse
    time_steps: int = 1000  # per pulse
    pulses: int = 1
    source: Path | None = field(default=None, compare=False)
    mechanism: Mechanism = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        masses = dict(zip(self.feed_gases, self.masses))
        try:
            self.mechanism = Mechanism.from_lines(self.reactions, masses, self.thermo_line)
        except ValueError as exc:
            raise InputError(f"Elementary Reactions: {exc}") from exc
        self._check_species()
        if self.pulse_duration <= 0 or self.time_steps < 10 or self.pulses < 1:
            raise InputError("Pulse Duration must be > 0, Time Steps >= 10 and Number of Pulses >= 1")

    def _check_species(self):
        mech_gases = self.mechanism.gas_names
        for g in mech_gases:
            if g not in self.feed_gases:
                hint = difflib.get_close_matches(g, self.feed_gases, n=1)
                raise InputError(f"gas {g!r} of the mechanism is missing from the feed table"
                                 + (f" (did you mean {hint[0]!r}?)" if hint else ""))
        for g in self.feed_gases:
            if species_kind(g) != GAS:
                raise InputError(f"feed entry {g!r} is not a gas name")
            if g not in mech_gases:
                hint = difflib.get_close_matches(g, mech_gases, n=1, cutoff=0.75)
                if hint:
                    raise InputError(f"feed gas {g!r} is not in the mechanism (did you mean {hint[0]!r}?)")
                log.info("feed gas %s takes part in no reaction; treated as an inert tracer", g)
        for s in self.mechanism.surface_names:
            if s not in self.surface0:
                hint = difflib.get_close_matches(s, list(self.surface0), n=1)
                raise InputError(f"surface species {s!r} is missing from the initial composition"
                                 + (f" (did you mean {hint[0]!r}?)" if hint else ""))
        extra = [s for s in self.surface0 if s not in self.mechanism.surface_names]
        if extra:
            raise InputError(f"initial composition lists species {extra} that appear in no reaction")

    @property
    def inert_gases(self) -> list[str]:
        return [g for g in self.feed_gases if g not in self.mechanism.gas_names]

    def schedule(self, pulses: int | None = None) -> PulseSchedule:
        n = pulses or self.pulses
        return PulseSchedule(tuple(self.feed_gases), tuple(self.intensities), tuple(self.pulse_times),
                             tuple(self.masses), n, self.pulse_duration)

    def solver_config(self, pulse_duration=None, pulses=None, scheme=None) -> SolverConfig:
        per = pulse_duration or self.pulse_duration
        n = pulses or self.pulses
        kw = {"scheme": scheme} if scheme else {}
        return SolverConfig(per * n, self.time_steps * n, **kw)

    def thermo(self, alpha: float = 1.0) -> ThermoConstraint | None:
        if not self.mechanism.thermo_combo:
            return None
        if self.dg_gas is None:
            raise InputError(f"Thermodynamic Consistency needs a {DG_KEY!r} row")
        return ThermoConstraint(self.dg_gas, self.mechanism.thermo_combo, alpha, self.reactor.temperature)


# -- reading --------------------------------------------------------------

def _blank(row) -> bool:
    return all(not c.strip() for c in row)


def _trim(row) -> list[str]:
    row = [c.strip() for c in row]
    while row and not row[-1]:
        row.pop()
    return row


def _split_sections(rows) -> dict[str, list[tuple[int, list[str]]]]:
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, row in enumerate(rows, start=1):
        if _blank(row):
            continue
        head = row[0].strip()
        if head in SECTIONS:
            if head in sections:
                raise InputError(f"line {lineno}: section {head!r} appears twice")
            current = head
            sections[current] = []
            continue
        if current is None:
            raise InputError(f"line {lineno}: cell {head!r} appears before any section header")
        sections[current].append((lineno, _trim(row)))
    return sections


def _number(cell: str, where: str, kind: str = "float"):
    try:
        value = float(cell)
    except ValueError:
        raise InputError(f"{where}: expected a number, found {cell!r}") from None
    if not math.isfinite(value):
        raise InputError(f"{where}: non-finite value {cell!r}")
    if kind == "int":
        if not value.is_integer():
            raise InputError(f"{where}: expected an integer, found {cell!r}")
        return int(value)
    return value


def _parse_reactor(rows) -> dict:
    out: dict = {}
    for lineno, row in rows:
        key = row[0]
        if key not in _REACTOR_KEYS:
            hint = difflib.get_close_matches(key, list(_REACTOR_KEYS), n=1)
            raise InputError(f"line {lineno}: unknown Reactor Setup key {key!r}"
                             + (f" (did you mean {hint[0]!r}?)" if hint else ""))
        attr, n, kind = _REACTOR_KEYS[key]
        cells = row[1:1 + n]
        if len(cells) < n or any(not c for c in cells):
            raise InputError(f"line {lineno}: {key!r} needs {n} value(s)")
        where = f"line {lineno} ({key})"
        if kind == "str":
            out[attr] = cells[0]
        else:
            vals = [_number(c, where, kind) for c in cells]
            out[attr] = tuple(vals) if n > 1 else vals[0]
    missing = [k for k in _REQUIRED if _REACTOR_KEYS[k][0] not in out]
    if missing:
        raise InputError(f"Reactor Setup is missing {missing}")
    return out


def _parse_feed(rows):
    gases: list[str] | None = None
    gas_rows: dict[str, list[float]] = {}
    surface: dict[str, float] | None = None
    header: list[str] | None = None
    for lineno, row in rows:
        key = row[0]
        if not key:
            header = row[1:]
            if not header or any(not h for h in header):
                raise InputError(f"line {lineno}: empty species name in the feed table header")
            continue
        if header is None:
            raise InputError(f"line {lineno}: {key!r} row precedes a species header row")
        where = f"line {lineno} ({key})"
        vals = [_number(c, where) for c in row[1:1 + len(header)]]
        if len(vals) != len(header):
            raise InputError(f"{where}: expected {len(header)} values")
        if key in _FEED_GAS_KEYS:
            if gases is not None and gases != header:
                raise InputError(f"{where}: gas columns differ from the previous gas rows")
            gases = list(header)
            if key in gas_rows:
                raise InputError(f"{where}: duplicate row")
            gas_rows[key] = vals
        elif key == _FEED_SURFACE_KEY:
            if surface is not None:
                raise InputError(f"{where}: duplicate row")
            surface = dict(zip(header, vals))
        else:
            raise InputError(f"{where}: unknown feed key {key!r}")
    if gases is None:
        raise InputError("Feed and Surface Composition has no gas rows")
    missing = [k for k in _FEED_GAS_KEYS if k not in gas_rows]
    if missing:
        raise InputError(f"Feed and Surface Composition is missing {missing}")
    for g in gases:
        if species_kind(g) != GAS:
            raise InputError(f"feed column {g!r} is not a gas name")
    for s in surface or {}:
        if species_kind(s) not in (ADSORBATE, SITE):
            raise InputError(f"initial composition column {s!r} is not a surface species")
    return gases, gas_rows, surface or {}


def _parse_reactions(rows):
    out = []
    for lineno, row in rows:
        cells = row[1:]
        if not cells:
            raise InputError(f"line {lineno}: reaction {row[0]!r} has no rate constant")
        out.append((row[0], cells))
    if not out:
        raise InputError("Elementary Reactions section is empty")
    return out


def _parse_thermo(rows):
    combo, dg = None, None
    for lineno, row in rows:
        if row[0] == DG_KEY:
            if len(row) < 2:
                raise InputError(f"line {lineno}: {DG_KEY!r} needs a value")
            dg = _number(row[1], f"line {lineno} ({DG_KEY})")
        elif combo is None:
            combo = row[0]
        else:
            raise InputError(f"line {lineno}: only one thermodynamic combination is supported")
    return combo, dg


def parse_input(text: str, source: Path | None = None) -> ExperimentDefinition:
    sections = _split_sections(csv.reader(io.StringIO(text)))
    missing = [req for req in (REACTOR, FEED, REACTIONS) if req not in sections]
    if missing:
        raise InputError("missing section(s): " + ", ".join(repr(m) for m in missing))
    r = _parse_reactor(sections[REACTOR])
    gases, gas_rows, surface = _parse_feed(sections[FEED])
    reactions = _parse_reactions(sections[REACTIONS])
    combo, dg = _parse_thermo(sections.get(THERMO, []))
    if r["ref_temperature"] < 100:
        warnings.warn(f"Reference Temperature of {r['ref_temperature']} K looks implausible", stacklevel=2)
    try:
        reactor = ReactorSpec(r["zone_lengths"], r["zone_voids"], r["radius"], r["temperature"],
                              r["ref_diffusion_inert"], r["ref_diffusion_catalyst"], r["ref_temperature"],
                              r["ref_mass"])
    except ValueError as exc:
        raise InputError(f"Reactor Setup: {exc}") from exc
    opt = {k: r[k] for k in ("output_folder", "data_folder", "pulse_duration", "time_steps", "pulses") if k in r}
    return ExperimentDefinition(
        reactor=reactor, mesh_size=r["mesh_size"], catalyst_density=r.get("catalyst_density", 0),
        feed_gases=gases, intensities=gas_rows["Intensity"], pulse_times=gas_rows["Time"],
        masses=gas_rows["Mass"], surface0=surface, reactions=reactions, thermo_line=combo, dg_gas=dg,
        source=source, **opt)


def load_input(path) -> ExperimentDefinition:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read input file {path}: {exc}") from exc
    return parse_input(text, path)


def _g(x) -> str:
    return repr(float(x)) if not float(x).is_integer() else str(int(x)) if abs(x) < 1e15 else repr(float(x))


def format_input(d: ExperimentDefinition) -> str:
    r = d.reactor
    rows = [[REACTOR, "Zone 1", "Zone 2", "Zone 3"],
            ["Zone Length", *map(_g, r.zone_lengths)],
            ["Zone Void", *map(_g, r.zone_voids)],
            ["Reactor Radius", _g(r.radius)],
            ["Reactor Temperature", _g(r.temperature)],
            ["Mesh Size", str(d.mesh_size)],
            ["Catalyst Mesh Density", str(d.catalyst_density)],
            ["Output Folder", d.output_folder]]
    if d.data_folder:
        rows.append(["Experimental Data Folder", d.data_folder])
    rows += [["Reference Diffusion Inert", _g(r.ref_diffusion_inert)],
             ["Reference Diffusion Catalyst", _g(r.ref_diffusion_catalyst)],
             ["Reference Temperature", _g(r.ref_temperature)],
             ["Reference Mass", _g(r.ref_mass)],
             ["Pulse Duration", _g(d.pulse_duration)],
             ["Time Steps", str(d.time_steps)],
             ["Number of Pulses", str(d.pulses)],
             [],
             [FEED],
             ["", *d.feed_gases],
             ["Intensity", *map(_g, d.intensities)],
             ["Time", *map(_g, d.pulse_times)],
             ["Mass", *map(_g, d.masses)]]
    if d.surface0:
        rows += [[], ["", *d.surface0], [_FEED_SURFACE_KEY, *map(_g, d.surface0.values())]]
    rows += [[], [REACTIONS]] + [[eq, *cells] for eq, cells in d.reactions]
    if d.thermo_line:
        rows += [[], [THERMO], [d.thermo_line]]
        if d.dg_gas is not None:
            rows.append([DG_KEY, _g(d.dg_gas)])
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def save_input(d: ExperimentDefinition, path) -> Path:
    path = Path(path)
    path.write_text(format_input(d))
    return path


def load_experimental(folder, gases) -> ExperimentalCurves:
    """One ``<gas>.csv`` per gas with columns (time_s, flux); the header row is optional."""
    folder = Path(folder)
    curves = {}
    for g in gases:
        path = folder / f"{g}.csv"
        if not path.is_file():
            raise InputError(f"experimental data for {g} not found: expected {path}")
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if not _blank(r)]
        if rows and not _is_numeric(rows[0]):
            rows = rows[1:]
        t, f = [], []
        for i, row in enumerate(rows, start=1):
            if len(row) < 2:
                raise InputError(f"{path}: data row {i} needs two columns")
            t.append(_number(row[0], f"{path} data row {i}"))
            f.append(_number(row[1], f"{path} data row {i}"))
        if len(t) < 2:
            raise InputError(f"{path}: at least two data rows are required")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise InputError(f"{path}: time is not increasing at data row {int(bad[0]) + 2}")
        curves[g] = (np.array(t), np.array(f))
    return ExperimentalCurves(curves)


def _is_numeric(row) -> bool:
    try:
        [float(c) for c in row[:2]]
        return True
    except ValueError:
        return False


# -- writing --------------------------------------------------------------

def _fmt_rows(data: np.ndarray) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(data), delimiter=",", fmt="%.17g")
    return buf.getvalue()


def write_table(path, header: list[str], data) -> Path:
    """CSV with a units-carrying header and round-trip exact numbers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.asarray(data, dtype=float)
    body = _fmt_rows(data) if data.size else ""
    path.write_text(",".join(header) + "\n" + body)
    return path


def write_records(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows([[repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in r] for r in rows])
    path.write_text(buf.getvalue())
    return path


def prepare_output(folder, input_path=None, input_text: str | None = None) -> Path:
    """Create the output tree and store the input file before any computation."""
    root = Path(folder)
    for sub in OUTPUT_DIRS:
        (root / sub).mkdir(parents=True, exist_ok=True)
    if input_path is not None:
        shutil.copyfile(input_path, root / Path(input_path).name)
    elif input_text is not None:
        (root / "input.csv").write_text(input_text)
    return root


def write_simulation(result: SimulationResult, folder) -> list[Path]:
    """Flux curves to ``flux_data/`` (whole run and per pulse) and catalyst fields to ``thin_data/``."""
    root = Path(folder)
    out = []
    for g in result.gas_names:
        out.append(write_table(root / "flux_data" / f"{g}.csv", ["time_s", "flux_nmol_per_s"],
                               np.column_stack([result.times, result.flux_of(g)])))
    if result.n_pulses > 1:
        for j in range(result.n_pulses):
            t, flux = result.pulse(j)
            for i, g in enumerate(result.gas_names):
                out.append(write_table(root / "flux_data" / f"{g}_pulse{j + 1}.csv",
                                       ["time_s", "flux_nmol_per_s"], np.column_stack([t, flux[i]])))
    x = result.catalyst_x
    for name, values in result.catalyst_fields.items():
        units = "nmol_per_cm3" if species_kind(name) == GAS else "nmol_per_cm3_catalyst"
        tt, xx = np.meshgrid(result.times, x, indexing="ij")
        data = np.column_stack([xx.ravel(), tt.ravel(), values.ravel()])
        safe = name.replace("*", "_star") if name != "*" else "vacant_sites"
        out.append(write_table(root / "thin_data" / f"{safe}.csv", ["x_cm", "time_s", f"value_{units}"], data))
    return out


def write_mass_balance(result: SimulationResult, folder) -> Path:
    rows = [[g, b["injected"], b["produced"], b["in_reactor"], b["outlet"], b["residual"]]
            for g, b in result.mass_balance.items()]
    return write_records(Path(folder) / "flux_data" / "mass_balance.csv",
                         ["gas", "injected_nmol", "produced_nmol", "in_reactor_nmol", "outlet_nmol",
                          "residual_nmol"], rows)


def write_gradient(names, gradient, units, folder, filename="gradient.csv") -> Path:
    rows = [[n, float(v), f"(nmol/s)^2 per {units[n]}"] for n, v in zip(names, gradient)]
    return write_records(Path(folder) / "sensitivity" / filename, ["param", "value", "units"], rows)


def write_fd_table(names, columns: dict[str, np.ndarray], adjoint, folder) -> Path:
    keys = list(columns)
    rows = [[n, *[float(columns[k][i]) for k in keys], float(adjoint[i])] for i, n in enumerate(names)]
    return write_records(Path(folder) / "sensitivity" / "fd_vs_adjoint.csv",
                         ["param", *[f"fd_{k.replace('/', '_')}" for k in keys], "adjoint"], rows)


def write_time_sensitivity(times, names, matrices: dict[str, np.ndarray], units, folder) -> list[Path]:
    out = []
    for gas, m in matrices.items():
        header = ["time_s"] + [f"dF_{n} (nmol/s per {units[n]})" for n in names]
        out.append(write_table(Path(folder) / "sensitivity" / f"time_sensitivity_{gas}.csv", header,
                               np.column_stack([times, m])))
    return out


def write_fit(report: FitReport, folder) -> list[Path]:
    root = Path(folder) / "fitting"
    header = ["iteration", "J_(nmol/s)^2", "grad_norm", "space"] + [f"{n} ({report.units[n]})" for n in report.names]
    rows = [[h["iteration"], float(h["J"]), float(h["grad_norm"]), h.get("space", ""), *map(float, h["params"])]
            for h in report.history]
    out = [write_records(root / "iterations.csv", header, rows)]
    rows = [[n, float(v), report.units[n], False, bool(b), bool(u)]
            for n, v, b, u in zip(report.names, report.final, report.at_bound, report.undetermined)]
    rows += [[n, float(v), "", True, False, False] for n, v in report.fixed.items()]
    out.append(write_records(root / "final_params.csv",
                             ["param", "value", "units", "fixed", "at_bound", "undetermined"], rows))
    for i, snap in enumerate(report.snapshots):
        out.append(write_table(root / "flux_iterations" / f"iter_{i:04d}.csv",
                               ["time_s"] + [f"{g}_nmol_per_s" for g in report.gas_names],
                               np.column_stack([report.times, snap.T])))
    return out


def write_hessian(names, matrix, folder) -> Path:
    rows = [[n, *map(float, row)] for n, row in zip(names, matrix)]
    return write_records(Path(folder) / "uncertainty_quantification" / "hessian.csv",
                         ["param (J units (nmol/s)^2 per k_i k_j)", *names], rows)


# -- plot data --------------------------------------------------------------

def _svg_chart(series: dict[str, tuple[np.ndarray, np.ndarray]], title: str, width=480, height=320) -> str:
    """Minimal line chart, one polyline per series."""
    pad = 40
    colours = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")
    xs = np.concatenate([s[0] for s in series.values()])
    ys = np.concatenate([s[1] for s in series.values()])
    x0, x1 = float(xs.min()), float(xs.max()) or 1.0
    y0, y1 = min(0.0, float(ys.min())), float(ys.max())
    y1 = y1 if y1 > y0 else y0 + 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0

    def px(x, y):
        return (pad + (x - x0) / (x1 - x0) * (width - 2 * pad),
                height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad))

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{title}</text>',
             f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
             'fill="none" stroke="#888"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="11">time (s)</text>']
    for k, (name, (x, y)) in enumerate(series.items()):
        stride = max(1, len(x) // 800)
        pts = " ".join("%.2f,%.2f" % px(a, b) for a, b in zip(x[::stride], y[::stride]))
        c = colours[k % len(colours)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 14 + 14 * k}" text-anchor="end" '
                     f'font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot_data(result: SimulationResult, folder, obs: ExperimentalCurves | None = None,
                   pulses=None, gases=None) -> list[Path]:
    """Per-pulse overlay CSVs (simulation, optional experiment) and one SVG per gas and pulse.

    ``pulses`` holds 1-based pulse indices; ``None`` emits all of them.
    """
    root = Path(folder) / "plots"
    root.mkdir(parents=True, exist_ok=True)
    n = result.n_pulses
    pulses = list(range(1, n + 1)) if pulses is None else list(pulses)
    for p in pulses:
        if not 1 <= p <= n:
            raise InputError(f"pulse {p} does not exist (run has {n} pulse(s))")
    gases = list(gases or result.gas_names)
    out = []
    for p in pulses:
        a = result.pulse_starts[p - 1]
        t, flux = result.pulse(p - 1)
        for g in gases:
            sim = flux[result.gas_names.index(g)]
            cols, header = [t, sim], ["time_s", "sim_flux_nmol_per_s"]
            series = {"simulation": (t, sim)}
            if obs is not None and g in obs.curves:
                te, fe = obs.curves[g]
                exp = np.interp(result.times[a:a + len(t)], te, fe)
                cols.append(exp)
                header.append("exp_flux_nmol_per_s")
                series["experiment"] = (t, exp)
            out.append(write_table(root / f"{g}_pulse{p}.csv", header, np.column_stack(cols)))
            svg = root / f"{g}_pulse{p}.svg"
            svg.write_text(_svg_chart(series, f"{g} outlet flux, pulse {p}"))
            out.append(svg)
    return out


def emit_reference_overlay(t, analytical, simulated, folder, name="reference") -> list[Path]:
    root = Path(folder) / "plots"
    csv_path = write_table(root / f"{name}.csv", ["time_s", "analytical_per_s", "simulated_per_s"],
                           np.column_stack([t, analytical, simulated]))
    svg = root / f"{name}.svg"
    svg.write_text(_svg_chart({"analytical": (t, analytical), "simulated": (t, simulated)},
                              "normalized outlet flux"))
    return [csv_path, svg]
