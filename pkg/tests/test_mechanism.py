import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import constants

from tapwb.mechanism import (ARRHENIUS, DIRECT, FREE_ENERGY, Mechanism, MechanismError, NonFiniteRateError,
                             RateParam, evaluate_rate_constant, parse_rate_cell, parse_reaction,
                             parse_thermo_combo, production_rates, rate_vector)


# -- parsing ---------------------------------------------------------------

def test_reversible_adsorption_step():
    s = parse_reaction("CO + * <-> CO*", ["1e-10", "1e-10"])
    assert s.reversible
    assert dict(s.reactants) == {"CO": 1, "*": 1}
    assert dict(s.products) == {"CO*": 1}
    assert s.forward == RateParam(DIRECT, (1e-10,)) and s.reverse == RateParam(DIRECT, (1e-10,))


def test_dissociative_adsorption_coefficients():
    s = parse_reaction("O2 + 2* <-> 2O*", ["5e-3", "1e-10"])
    assert dict(s.reactants) == {"O2": 1, "*": 2}
    assert dict(s.products) == {"O*": 2}
    assert s.order("f") == 3 and s.order("b") == 2


def test_fixed_irreversible_step():
    s = parse_reaction("C* -> C + *", ["1!"])
    assert not s.reversible
    assert s.forward.fixed and s.forward.values == (1.0,)
    assert s.reverse is None


@pytest.mark.parametrize("cell, form, values, fixed", [
    ("1.5", DIRECT, (1.5,), False),
    ("1$2", ARRHENIUS, (1.0, 2.0), False),
    ("1@2", FREE_ENERGY, (1.0, 2.0), False),
    ("3e4$10!", ARRHENIUS, (3e4, 10.0), True),
])
def test_rate_cell_grammar(cell, form, values, fixed):
    p = parse_rate_cell(cell)
    assert (p.form, p.values, p.fixed) == (form, values, fixed)


@pytest.mark.parametrize("line, cells", [
    ("CO + * = CO*", ["1"]),            # no arrow
    ("CO + * <-> CO* -> X", ["1", "1"]),  # two arrows
    ("CO + # -> CO*", ["1"]),           # bad token
    ("CO + * <-> CO*", ["1"]),          # reverse cell missing
    ("CO + * -> CO*", ["-1"]),          # negative value
    ("CO + * -> CO*", ["abc"]),         # non-numeric
    ("A* + B* -> C*", ["1"]),           # site imbalance
])
def test_parse_errors(line, cells):
    with pytest.raises(MechanismError):
        parse_reaction(line, cells)


def test_irreversible_with_reverse_placeholder():
    s = parse_reaction("CO + O* -> CO2 + *", ["20.2", "--"])
    assert not s.reversible


# -- rate constants --------------------------------------------------------------

def test_direct_and_zero_barrier():
    assert evaluate_rate_constant(RateParam(DIRECT, (1.5,)), 400) == 1.5
    assert evaluate_rate_constant(RateParam(ARRHENIUS, (1.0, 0.0)), 400) == 1.0


def test_free_energy_zero_barrier_is_kT_over_h():
    expected = constants.k * 400 / constants.h  # independent CODATA evaluation
    assert evaluate_rate_constant(RateParam(FREE_ENERGY, (1.0, 0.0)), 400) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(8.333e12, rel=1e-3)


def test_arrhenius_energy_in_kj():
    k = evaluate_rate_constant(RateParam(ARRHENIUS, (2.0, 10.0)), 500)
    assert k == pytest.approx(2.0 * math.exp(-10000.0 / (constants.R * 500)), rel=1e-12)


def test_overflow_is_reported():
    with pytest.raises(NonFiniteRateError):
        evaluate_rate_constant(RateParam(ARRHENIUS, (1.0, -1e6)), 300)


@given(k=st.floats(1e-8, 1e8), T=st.floats(200, 1200), A=st.floats(1e-3, 1e13))
def test_with_rate_constant_roundtrip(k, T, A):
    for form in (ARRHENIUS, FREE_ENERGY):
        p = RateParam(form, (A, 50.0)).with_rate_constant(k, T)
        assert p.values[0] == A
        assert p.evaluate(T) == pytest.approx(k, rel=1e-9)


# -- rates -------------------------------------------------------------------------

def test_single_irreversible_step_rates():
    mech = Mechanism.from_lines([("A + * -> B + *", ["2"])])
    # A + * -> B + * with theta_* = 1 behaves like A -> B, k = 2
    r = rate_vector(mech, np.array([3.0, 0.0]), np.array([1.0]), mech.rate_constants(400))
    assert r.tolist() == [6.0]
    R = production_rates(mech, r)
    assert R[mech.species_names.index("A")] == -6.0 and R[mech.species_names.index("B")] == 6.0


def test_hand_evaluated_reversible_adsorption():
    mech = Mechanism.from_lines([("CO + * <-> CO*", ["1.5", "0.15"])])
    theta = {"CO*": 1.0, "*": 4.0}
    r = rate_vector(mech, np.array([2.0]), np.array([theta[s] for s in mech.surface_names]),
                    mech.rate_constants(400))
    assert r[0] == pytest.approx(1.5 * 2 * 4 - 0.15 * 1)
    assert r[0] == pytest.approx(11.85)


def test_zero_rate_constants_give_zero_rates():
    mech = Mechanism.from_lines([("CO + * <-> CO*", ["0", "0"]), ("O2 + 2* -> 2O*", ["0"])])
    X = np.random.default_rng(0).random(len(mech.species_names))
    r = rate_vector(mech, X[:2], X[2:], mech.rate_constants(400))
    assert np.all(r == 0)


def test_stoichiometric_powers():
    mech = Mechanism.from_lines([("O2 + 2* <-> 2O*", ["2", "3"])])
    th = {"O*": 0.5, "*": 4.0}
    r = rate_vector(mech, np.array([1.5]), np.array([th[s] for s in mech.surface_names]), mech.rate_constants(400))
    assert r[0] == pytest.approx(2 * 1.5 * 4.0**2 - 3 * 0.5**2)


def test_tiny_negative_concentrations_are_clamped():
    mech = Mechanism.from_lines([("O2 + 2* <-> 2O*", ["1", "1"])])
    r = rate_vector(mech, np.array([-1e-14]), np.array([0.0, 1.0]), mech.rate_constants(400))
    assert r[0] == 0.0


def _co_mech():
    return Mechanism.from_lines([("CO + * <-> CO*", ["1.5", "0.15"]), ("O2 + 2* <-> 2O*", ["5e-3", "2"]),
                                 ("CO* + O* <-> CO2 + 2*", ["10.5", "1.5e-2"]),
                                 ("CO + O* -> CO2 + *", ["20.2"])])


def test_stoichiometry_columns():
    mech = _co_mech()
    S = mech.stoich
    idx = {n: i for i, n in enumerate(mech.species_names)}
    for m, step in enumerate(mech.steps):
        col = np.zeros(len(idx), dtype=int)
        for n, c in step.reactants:
            col[idx[n]] -= c
        for n, c in step.products:
            col[idx[n]] += c
        assert np.array_equal(S[:, m], col)


def test_unit_state_equal_constants_gives_zero_net_rate():
    mech = Mechanism.from_lines([(s.equation(), ["2.5", "2.5"]) for s in _co_mech().steps if s.reversible])
    r = rate_vector(mech, np.ones(len(mech.gas_names)), np.ones(len(mech.surface_names)), mech.rate_constants(400))
    assert np.allclose(r, 0.0)


@given(scale=st.floats(0.0, 1e3), which=st.integers(0, 3))
def test_rates_linear_in_each_k(scale, which):
    mech = _co_mech()
    kf, kb = mech.rate_constants(400)
    X = np.linspace(0.1, 2.0, len(mech.species_names))
    C, th = X[:len(mech.gas_names)], X[len(mech.gas_names):]
    r1 = rate_vector(mech, C, th, (kf, kb))
    kf2 = kf.copy()
    kf2[which] *= scale
    r2 = rate_vector(mech, C, th, (kf2, kb))
    fwd = rate_vector(mech, C, th, (np.eye(4)[which] * kf[which], np.zeros(4)))
    assert r2[which] == pytest.approx(r1[which] + (scale - 1) * fwd[which], rel=1e-12, abs=1e-12)


def test_unused_species_and_site_balance():
    with pytest.raises(MechanismError):
        Mechanism.from_lines([("A + * -> A*", ["1"])], thermo_line="r1 + r2")


# -- thermodynamic combination ------------------------------------------------------

def test_combo_from_table():
    assert parse_thermo_combo("r1 + (0.5)*r2 + r3") == [(1, 1.0), (2, 0.5), (3, 1.0)]
    assert parse_thermo_combo("r1") == [(1, 1.0)]


def test_combo_duplicates_summed():
    assert parse_thermo_combo("r1 + (2)*r1") == [(1, 3.0)]


@pytest.mark.parametrize("line", ["r1 + (x)*r2", "r4", "q1", "r1 +"])
def test_combo_errors(line):
    with pytest.raises(MechanismError):
        parse_thermo_combo(line, n_steps=3)


# -- round trip ---------------------------------------------------------------------

species = st.sampled_from(["CO", "O2", "H2", "CO2", "N2O"])
adsorbates = st.sampled_from(["CO*", "O*", "H*", "N*"])
cells = st.one_of(
    st.floats(0, 1e6).map(repr),
    st.tuples(st.floats(1e-3, 1e13), st.floats(0, 300)).map(lambda t: f"{t[0]!r}${t[1]!r}"),
    st.tuples(st.floats(1e-3, 10), st.floats(0, 300)).map(lambda t: f"{t[0]!r}@{t[1]!r}"),
)


@st.composite
def steps(draw):
    gas = draw(species)
    ads = draw(adsorbates)
    n = draw(st.integers(1, 2))
    pre = "" if n == 1 else "2"
    line = f"{gas} + {pre}* {draw(st.sampled_from(['->', '<->']))} {pre}{ads}"
    fixed = draw(st.booleans())
    c = [draw(cells) + ("!" if fixed else ""), draw(cells)]
    return line, c


@given(steps())
def test_step_print_parse_roundtrip(spec):
    line, c = spec
    s = parse_reaction(line, c)
    again = parse_reaction(s.equation(), s.rate_cells())
    assert again == s


def test_unused_species_warns():
    from tapwb.mechanism import ElementaryStep, Species, GAS
    step = parse_reaction("CO + * <-> CO*", ["1", "1"])
    sp = (Species("CO", GAS, 28.0, 0), Species("H2", GAS, 2.0, 1), Species("CO*", "adsorbate"),
          Species("*", "site"))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        with pytest.raises(MechanismError):
            Mechanism(sp, (step,))
    assert any("H2" in str(x.message) for x in w)
