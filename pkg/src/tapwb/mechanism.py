"""Elementary-step parsing, stoichiometry and mass-action rate laws.

Reaction lines look like ``"O2 + 2* <-> 2O*"``; rate cells accept a direct
rate constant (``"1.5"``), a prefactor/activation-enthalpy pair
(``"1e13$80"``, kJ/mol) or a transmission-factor/activation-free-energy pair
(``"1@75"``, kJ/mol).  A trailing ``"!"`` marks the value as fixed during
fitting.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import CLAMP_TOL, H_PLANCK, K_BOLTZMANN, R_GAS

GAS = "gas"
INERT_GAS = "inert_gas"
ADSORBATE = "adsorbate"
SITE = "site"

DIRECT = "direct_k"
ARRHENIUS = "arrhenius"
FREE_ENERGY = "free_energy"

_TERM_RE = re.compile(r"^\s*(\d+)?\s*([A-Za-z][A-Za-z0-9_]*\*?|\*)\s*$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_COMBO_TERM_RE = re.compile(r"^\s*(?:\(\s*([^()]*?)\s*\)\s*\*\s*)?r(\d+)\s*$")


class MechanismError(ValueError):
    """Raised for malformed reactions, rate cells or mechanisms."""


class NonFiniteRateError(MechanismError):
    """Raised when a rate constant evaluates to inf or nan."""


def species_kind(name: str) -> str:
    if name == "*":
        return SITE
    if name.endswith("*"):
        return ADSORBATE
    return GAS


def site_count(name: str) -> int:
    return 1 if name.endswith("*") else 0


@dataclass(frozen=True)
class Species:
    name: str
    kind: str
    mass: float | None = None
    index: int = 0

    def __post_init__(self):
        if self.kind == GAS and self.name.endswith("*"):
            raise MechanismError(f"{self.name!r} cannot be a gas species")
        if self.kind in (GAS, INERT_GAS) and self.mass is not None and not self.mass > 0:
            raise MechanismError(f"gas {self.name!r} needs a positive mass, got {self.mass}")


@dataclass(frozen=True)
class RateParam:
    """One rate-constant specification as written in the input file."""

    form: str
    values: tuple[float, ...]
    fixed: bool = False

    def __post_init__(self):
        if self.form == DIRECT:
            if len(self.values) != 1 or not self.values[0] >= 0:
                raise MechanismError(f"direct rate constant must be a single value >= 0: {self.values}")
        elif self.form in (ARRHENIUS, FREE_ENERGY):
            if len(self.values) != 2 or not self.values[0] > 0:
                raise MechanismError(f"{self.form} needs a prefactor > 0 and an energy: {self.values}")
        else:
            raise MechanismError(f"unknown rate form {self.form!r}")

    def evaluate(self, temperature: float) -> float:
        return evaluate_rate_constant(self, temperature)

    def to_text(self) -> str:
        sep = {DIRECT: None, ARRHENIUS: "$", FREE_ENERGY: "@"}[self.form]
        body = _fmt(self.values[0]) if sep is None else sep.join(_fmt(v) for v in self.values)
        return body + ("!" if self.fixed else "")

    def with_rate_constant(self, k: float, temperature: float) -> "RateParam":
        """Return a parameter of the same form that evaluates to ``k`` at ``temperature``.

        The prefactor is kept and the energy is solved for; for direct
        constants the value is simply replaced.
        """
        if self.form == DIRECT:
            return RateParam(DIRECT, (float(k),), self.fixed)
        base = RateParam(self.form, (self.values[0], 0.0)).evaluate(temperature)
        energy = -R_GAS * temperature * math.log(k / base) / 1000.0
        return RateParam(self.form, (self.values[0], energy), self.fixed)


def _fmt(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _parse_number(text: str, cell: str) -> float:
    if not _NUMBER_RE.match(text):
        raise MechanismError(f"non-numeric value {text!r} in rate cell {cell!r}")
    value = float(text)
    if value < 0:
        raise MechanismError(f"negative value in rate cell {cell!r}")
    return value


def parse_rate_cell(cell: str) -> RateParam:
    text = cell.strip()
    fixed = text.endswith("!")
    if fixed:
        text = text[:-1].strip()
    if not text:
        raise MechanismError(f"empty rate cell {cell!r}")
    for sep, form in (("$", ARRHENIUS), ("@", FREE_ENERGY)):
        if sep in text:
            parts = text.split(sep)
            if len(parts) != 2:
                raise MechanismError(f"expected two fields around {sep!r} in {cell!r}")
            return RateParam(form, tuple(_parse_number(p.strip(), cell) for p in parts), fixed)
    return RateParam(DIRECT, (_parse_number(text, cell),), fixed)


def evaluate_rate_constant(p: RateParam, temperature: float) -> float:
    """Rate constant at ``temperature`` (K); energies are read as kJ/mol."""
    if not temperature > 0:
        raise MechanismError(f"temperature must be positive, got {temperature}")
    if p.form == DIRECT:
        k = p.values[0]
    else:
        prefactor, energy_kj = p.values
        with np.errstate(over="ignore"):
            boltz = float(np.exp(-energy_kj * 1000.0 / (R_GAS * temperature)))
        if p.form == ARRHENIUS:
            k = prefactor * boltz
        else:
            k = prefactor * K_BOLTZMANN * temperature / H_PLANCK * boltz
    if not math.isfinite(k):
        raise NonFiniteRateError(f"rate constant for {p.to_text()!r} at T={temperature} K is not finite")
    return float(k)


@dataclass(frozen=True)
class ElementaryStep:
    reactants: tuple[tuple[str, int], ...]
    products: tuple[tuple[str, int], ...]
    reversible: bool
    forward: RateParam
    reverse: RateParam | None = None
    index: int = 1

    def __post_init__(self):
        if self.reversible != (self.reverse is not None):
            raise MechanismError(f"step {self.index}: reverse parameter must be given iff reversible")
        for side in (self.reactants, self.products):
            if not side:
                raise MechanismError(f"step {self.index}: empty reaction side")
            if any(c < 1 for _, c in side):
                raise MechanismError(f"step {self.index}: coefficients must be >= 1")
            surface = {n for n, _ in side if n.endswith("*")}
            if len(surface) > 2:
                raise MechanismError(f"step {self.index}: more than two surface species on one side")
        left = sum(c * site_count(n) for n, c in self.reactants)
        right = sum(c * site_count(n) for n, c in self.products)
        if left != right:
            raise MechanismError(f"step {self.index} ({self.equation()}): site balance {left} != {right}")

    def equation(self) -> str:
        def side(terms):
            return " + ".join(f"{c if c > 1 else ''}{n}" for n, c in terms)

        arrow = "<->" if self.reversible else "->"
        return f"{side(self.reactants)} {arrow} {side(self.products)}"

    def rate_cells(self) -> list[str]:
        cells = [self.forward.to_text()]
        if self.reverse is not None:
            cells.append(self.reverse.to_text())
        return cells

    def order(self, direction: str = "f") -> int:
        side = self.reactants if direction == "f" else self.products
        return sum(c for _, c in side)


def _parse_side(text: str, line: str) -> tuple[tuple[str, int], ...]:
    merged: dict[str, int] = {}
    for term in text.split("+"):
        m = _TERM_RE.match(term)
        if m is None:
            raise MechanismError(f"cannot parse term {term.strip()!r} in {line!r}")
        coef = int(m.group(1)) if m.group(1) else 1
        merged[m.group(2)] = merged.get(m.group(2), 0) + coef
    return tuple(merged.items())


def parse_reaction(line: str, rate_cells: list[str], index: int = 1) -> ElementaryStep:
    n_rev = line.count("<->")
    n_fwd = line.count("->") - n_rev
    if n_rev + n_fwd != 1 or line.replace("<->", "").replace("->", "").count("<") + line.count("=") > 0:
        raise MechanismError(f"reaction {line!r} must contain exactly one '->' or '<->'")
    reversible = n_rev == 1
    left, right = line.split("<->" if reversible else "->")
    reactants = _parse_side(left, line)
    products = _parse_side(right, line)
    cells = [c for c in rate_cells if c is not None and c.strip() not in ("", "--", "-")]
    if not cells:
        raise MechanismError(f"reaction {line!r} has no forward rate cell")
    forward = parse_rate_cell(cells[0])
    reverse = None
    if reversible:
        if len(cells) < 2:
            raise MechanismError(f"reversible reaction {line!r} is missing its reverse rate cell")
        reverse = parse_rate_cell(cells[1])
    return ElementaryStep(reactants, products, reversible, forward, reverse, index)


def parse_thermo_combo(line: str, n_steps: int | None = None) -> list[tuple[int, float]]:
    """Parse ``"r1 + (0.5)*r2 + r3"`` into ``[(1, 1.0), (2, 0.5), (3, 1.0)]``.

    Step indices are 1-based; repeated references are summed.
    """
    terms, depth, buf = [], 0, ""
    for ch in line:
        depth += (ch == "(") - (ch == ")")
        if ch == "+" and depth == 0:
            terms.append(buf)
            buf = ""
        else:
            buf += ch
    terms.append(buf)
    combo: dict[int, float] = {}
    for term in terms:
        m = _COMBO_TERM_RE.match(term)
        if m is None:
            raise MechanismError(f"cannot parse thermodynamic term {term.strip()!r}")
        coef_text = m.group(1)
        if coef_text is None:
            coef = 1.0
        else:
            try:
                coef = float(coef_text)
            except ValueError:
                raise MechanismError(f"non-numeric coefficient {coef_text!r}") from None
        step = int(m.group(2))
        if step < 1 or (n_steps is not None and step > n_steps):
            raise MechanismError(f"thermodynamic term references nonexistent step r{step}")
        combo[step] = combo.get(step, 0.0) + coef
    return list(combo.items())


def param_name(step: int, direction: str) -> str:
    return f"{step}{direction}"


def rate_units(order: int) -> str:
    if order == 1:
        return "1/s"
    if order == 2:
        return "cm3/(nmol s)"
    return f"cm{3 * (order - 1)}/(nmol{order - 1} s)"


@dataclass(frozen=True)
class Mechanism:
    species: tuple[Species, ...]
    steps: tuple[ElementaryStep, ...]
    thermo_combo: tuple[tuple[int, float], ...] = ()
    stoich: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise MechanismError("species names must be unique")
        used = {n for st in self.steps for n, _ in st.reactants + st.products}
        unused = [n for n in names if n not in used]
        if unused:
            warnings.warn(f"species {unused} appear in no elementary step", stacklevel=2)
            raise MechanismError(f"species {unused} appear in no elementary step")
        missing = used - set(names)
        if missing:
            raise MechanismError(f"steps reference unregistered species {sorted(missing)}")
        for step, _ in self.thermo_combo:
            if not 1 <= step <= len(self.steps):
                raise MechanismError(f"thermodynamic combination references nonexistent step r{step}")
        pos = {n: i for i, n in enumerate(names)}
        S = np.zeros((len(names), len(self.steps)), dtype=int)
        for m, st in enumerate(self.steps):
            for n, c in st.reactants:
                S[pos[n], m] -= c
            for n, c in st.products:
                S[pos[n], m] += c
        S.setflags(write=False)
        object.__setattr__(self, "stoich", S)

    @classmethod
    def from_steps(cls, steps, masses=None, thermo_combo=()) -> "Mechanism":
        """Build the species registry from the steps (gases first, then adsorbates, then ``*``)."""
        masses = masses or {}
        order: list[str] = []
        for st in steps:
            for n, _ in st.reactants + st.products:
                if n not in order:
                    order.append(n)
        gases = [n for n in order if species_kind(n) == GAS]
        ads = [n for n in order if species_kind(n) == ADSORBATE]
        sites = [n for n in order if species_kind(n) == SITE]
        species = [Species(n, GAS, masses.get(n), i) for i, n in enumerate(gases)]
        species += [Species(n, species_kind(n), None, i) for i, n in enumerate(ads + sites)]
        steps = tuple(
            st if st.index == m + 1 else ElementaryStep(st.reactants, st.products, st.reversible,
                                                        st.forward, st.reverse, m + 1)
            for m, st in enumerate(steps)
        )
        return cls(tuple(species), steps, tuple(thermo_combo))

    @classmethod
    def from_lines(cls, rows, masses=None, thermo_line=None) -> "Mechanism":
        """``rows`` is an iterable of ``(reaction, [rate cells])``."""
        steps = [parse_reaction(line, cells, m + 1) for m, (line, cells) in enumerate(rows)]
        combo = parse_thermo_combo(thermo_line, len(steps)) if thermo_line else ()
        return cls.from_steps(steps, masses, combo)

    @property
    def species_names(self) -> list[str]:
        return [s.name for s in self.species]

    @property
    def gas_names(self) -> list[str]:
        return [s.name for s in self.species if s.kind in (GAS, INERT_GAS)]

    @property
    def surface_names(self) -> list[str]:
        return [s.name for s in self.species if s.kind in (ADSORBATE, SITE)]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def param_names(self) -> list[str]:
        """Names of every rate constant: ``1f, 1b, 2f, ...`` (reverse only if reversible)."""
        out = []
        for st in self.steps:
            out.append(param_name(st.index, "f"))
            if st.reversible:
                out.append(param_name(st.index, "b"))
        return out

    def rate_params(self) -> dict[str, RateParam]:
        out = {}
        for st in self.steps:
            out[param_name(st.index, "f")] = st.forward
            if st.reversible:
                out[param_name(st.index, "b")] = st.reverse
        return out

    def param_units(self) -> dict[str, str]:
        out = {}
        for st in self.steps:
            out[param_name(st.index, "f")] = rate_units(st.order("f"))
            if st.reversible:
                out[param_name(st.index, "b")] = rate_units(st.order("b"))
        return out

    def rate_constants(self, temperature: float) -> tuple[np.ndarray, np.ndarray]:
        """Evaluated ``(kf, kb)``; ``kb`` is 0 for irreversible steps."""
        kf = np.array([st.forward.evaluate(temperature) for st in self.steps])
        kb = np.array([st.reverse.evaluate(temperature) if st.reversible else 0.0 for st in self.steps])
        return kf, kb

    def with_rate_constants(self, values: dict[str, float], temperature: float) -> "Mechanism":
        """Copy of the mechanism with selected rate constants replaced (keeps each param's form)."""
        steps = []
        for st in self.steps:
            fwd, rev = st.forward, st.reverse
            key = param_name(st.index, "f")
            if key in values:
                fwd = fwd.with_rate_constant(values[key], temperature)
            key = param_name(st.index, "b")
            if key in values and rev is not None:
                rev = rev.with_rate_constant(values[key], temperature)
            steps.append(ElementaryStep(st.reactants, st.products, st.reversible, fwd, rev, st.index))
        return Mechanism(self.species, tuple(steps), self.thermo_combo)

    def with_masses(self, masses: dict[str, float]) -> "Mechanism":
        species = tuple(
            Species(s.name, s.kind, masses.get(s.name, s.mass), s.index) if s.kind == GAS else s
            for s in self.species
        )
        return Mechanism(species, self.steps, self.thermo_combo)

    def kinetics(self) -> "MassAction":
        return MassAction(self)


def clamp(x: np.ndarray) -> np.ndarray:
    """Zero out tiny negative concentrations (above ``-CLAMP_TOL``)."""
    return np.where((x < 0) & (x > -CLAMP_TOL), 0.0, x)


class MassAction:
    """Vectorised mass-action kinetics for a mechanism.

    States are arrays ``X`` of shape ``(n_species, n_points)`` in the
    mechanism's species order (gases first, then surface species).
    """

    def __init__(self, mech: Mechanism):
        pos = {n: i for i, n in enumerate(mech.species_names)}
        self.n_species = len(pos)
        self.n_steps = mech.n_steps
        self.S = np.asarray(mech.stoich, dtype=float)
        self.fwd_terms = [[(pos[n], c) for n, c in st.reactants] for st in mech.steps]
        self.rev_terms = [[(pos[n], c) for n, c in st.products] for st in mech.steps]

    @staticmethod
    def _monomial(X, terms):
        out = np.ones(X.shape[1:])
        for j, c in terms:
            out = out * X[j] ** c
        return out

    @staticmethod
    def _monomial_grad(X, terms):
        """List of ``(species index, d monomial / d X_j)``."""
        grads = []
        for a, (j, c) in enumerate(terms):
            g = c * X[j] ** (c - 1) if c > 1 else np.ones(X.shape[1:])
            for b, (l, d) in enumerate(terms):
                if b != a:
                    g = g * X[l] ** d
            grads.append((j, g))
        return grads

    def monomials(self, X):
        X = clamp(np.asarray(X, dtype=float))
        if not self.n_steps:
            empty = np.zeros((0,) + X.shape[1:])
            return empty, empty
        fwd = np.array([self._monomial(X, t) for t in self.fwd_terms])
        rev = np.array([self._monomial(X, t) for t in self.rev_terms])
        return fwd, rev

    def rates(self, X, kf, kb):
        fwd, rev = self.monomials(X)
        return kf[:, None] * fwd - kb[:, None] * rev if fwd.ndim == 2 else kf * fwd - kb * rev

    def production(self, X, kf, kb):
        return self.S @ self.rates(X, kf, kb)

    def rate_vjp(self, X, kf, kb, lam_r):
        """Pull back ``lam_r`` (n_steps, n_points) through the rate map.

        Returns ``(lam_X, lam_kf, lam_kb)``.
        """
        X = clamp(np.asarray(X, dtype=float))
        lam_X = np.zeros_like(X)
        lam_kf = np.zeros(self.n_steps)
        lam_kb = np.zeros(self.n_steps)
        inside = ~((X < 0) & (X > -CLAMP_TOL))
        for m in range(self.n_steps):
            lf = lam_r[m] * kf[m]
            for j, g in self._monomial_grad(X, self.fwd_terms[m]):
                lam_X[j] += lf * g
            lam_kf[m] = np.sum(lam_r[m] * self._monomial(X, self.fwd_terms[m]))
            if kb[m] != 0.0:
                lb = lam_r[m] * kb[m]
                for j, g in self._monomial_grad(X, self.rev_terms[m]):
                    lam_X[j] -= lb * g
            lam_kb[m] = -np.sum(lam_r[m] * self._monomial(X, self.rev_terms[m]))
        return lam_X * inside, lam_kf, lam_kb

    def rate_jvp(self, X, kf, kb, dX, dkf, dkb):
        """Tangent of the rates: ``dX`` is (n_species, n_points, n_dir), ``dkf``/``dkb`` (n_steps, n_dir)."""
        X = clamp(np.asarray(X, dtype=float))
        inside = ~((X < 0) & (X > -CLAMP_TOL))
        dX = dX * inside[..., None]
        dr = np.zeros((self.n_steps,) + dX.shape[1:])
        for m in range(self.n_steps):
            fwd = self._monomial(X, self.fwd_terms[m])
            rev = self._monomial(X, self.rev_terms[m])
            dr[m] += fwd[:, None] * dkf[m] - rev[:, None] * dkb[m]
            for j, g in self._monomial_grad(X, self.fwd_terms[m]):
                dr[m] += kf[m] * g[:, None] * dX[j]
            if kb[m] != 0.0:
                for j, g in self._monomial_grad(X, self.rev_terms[m]):
                    dr[m] -= kb[m] * g[:, None] * dX[j]
        return dr

    def rate_jacobian(self, X, kf, kb):
        """Dense ``d r / d X`` of shape (n_steps, n_species, n_points)."""
        X = clamp(np.asarray(X, dtype=float))
        inside = ~((X < 0) & (X > -CLAMP_TOL))
        jac = np.zeros((self.n_steps,) + X.shape)
        for m in range(self.n_steps):
            for j, g in self._monomial_grad(X, self.fwd_terms[m]):
                jac[m, j] += kf[m] * g
            if kb[m] != 0.0:
                for j, g in self._monomial_grad(X, self.rev_terms[m]):
                    jac[m, j] -= kb[m] * g
        return jac * inside


def rate_vector(mech: Mechanism, C, theta, k) -> np.ndarray:
    """Net rate of every step for gas concentrations ``C`` and surface concentrations ``theta``.

    ``k`` is a ``(kf, kb)`` pair of evaluated rate constants.  Extra trailing
    axes on ``C``/``theta`` (e.g. mesh nodes) are carried through.
    """
    C = np.asarray(C, dtype=float)
    theta = np.asarray(theta, dtype=float)
    kf, kb = (np.asarray(a, dtype=float) for a in k)
    if C.shape[0] != len(mech.gas_names) or theta.shape[0] != len(mech.surface_names):
        raise MechanismError(
            f"state has {C.shape[0]} gas / {theta.shape[0]} surface entries, mechanism expects "
            f"{len(mech.gas_names)} / {len(mech.surface_names)}"
        )
    if kf.shape != (mech.n_steps,) or kb.shape != (mech.n_steps,):
        raise MechanismError(f"expected {mech.n_steps} forward and reverse rate constants")
    X = np.concatenate([C, theta], axis=0)
    squeeze = X.ndim == 1
    if squeeze:
        X = X[:, None]
    r = mech.kinetics().rates(X, kf, kb)
    return r[:, 0] if squeeze else r


def production_rates(mech: Mechanism, rates) -> np.ndarray:
    """Species production ``S @ r`` in the mechanism's species order."""
    return np.asarray(mech.stoich, dtype=float) @ np.asarray(rates)
