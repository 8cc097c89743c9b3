import dataclasses
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapwb import io as tio
from tapwb.inverse import ExperimentalCurves, j_data

INPUTS = Path(__file__).resolve().parents[1] / "inputs"

LAYOUT = """Reactor Setup,Zone 1,Zone 2,Zone 3
Zone Length,3.0,0.1,2.9
Zone Void,0.4,0.4,0.4
Reactor Radius,1,,
Reactor Temperature,400,,
Mesh Size,200,,
Catalyst Mesh Density,4,,
Output Folder,results,,
Experimental Data Folder,../data,,
Reference Diffusion Inert,13.5,,
Reference Diffusion Catalyst,13.5,,
Reference Temperature,13.5,,
Reference Mass,40,,
,,,
Feed and Surface Composition,,,
,CO,O2,CO2
Intensity,5,5,5
Time,0,0,0
Mass,28,32,44
,,,
,CO*,O*,*
Initial Composition,0,12,12
,,,
Elementary Reactions,,,
CO + * <-> CO*,1e-10,1e-10,
O2 + 2* <-> 2O*,1e-10,1e-10,
CO* + O* <-> CO2 + 2*,1e-10,1e-10,
,,,
Thermodynamic Consistency,,,
r1 + (0.5)*r2 + r3,,,
"""

SMALL = """Reactor Setup,Zone 1,Zone 2,Zone 3
Zone Length,3.0,0.1,2.9
Zone Void,0.4,0.4,0.4
Reactor Radius,1
Reactor Temperature,400
Mesh Size,60
Catalyst Mesh Density,1
Reference Diffusion Inert,13.5
Reference Diffusion Catalyst,13.5
Reference Temperature,400
Reference Mass,40
Pulse Duration,0.3
Time Steps,150

Feed and Surface Composition
,CO,O2,CO2,Ar
Intensity,5,5,0,5
Time,0,0,0,0
Mass,28,32,44,40

,CO*,O*,*
Initial Composition,0,0,12

Elementary Reactions
CO + * <-> CO*,1.5,0.15
O2 + 2* <-> 2O*,5e-3,1e-10
CO* + O* <-> CO2 + 2*,10.5,1.5e-2
CO + O* <-> CO2 + *,20.2,1e-10
"""


def test_reference_layout_verbatim():
    d = tio.parse_input(LAYOUT)
    assert d.reactor.zone_lengths == (3.0, 0.1, 2.9)
    assert d.reactor.zone_voids == (0.4, 0.4, 0.4)
    assert d.feed_gases == ["CO", "O2", "CO2"] and d.intensities == [5.0, 5.0, 5.0]
    assert d.surface0 == {"CO*": 0.0, "O*": 12.0, "*": 12.0}
    assert d.mesh_size == 200 and d.catalyst_density == 4
    assert d.data_folder == "../data"
    steps = d.mechanism.steps
    assert len(steps) == 3 and all(s.reversible for s in steps)
    assert all(v == 1e-10 for v in d.mechanism.rate_constants(400)[0])
    assert d.mechanism.thermo_combo == ((1, 1.0), (2, 0.5), (3, 1.0))


def test_shipped_example_differs_only_in_reference_temperature():
    ours = tio.load_input(INPUTS / "example_input.csv")
    verbatim = tio.parse_input(LAYOUT)
    assert ours.reactor == dataclasses.replace(verbatim.reactor, ref_temperature=400.0)
    assert ours.reactions == verbatim.reactions


def test_missing_mandatory_section():
    text = LAYOUT.split("Feed and Surface Composition")[0]
    with pytest.raises(tio.InputError, match="Elementary Reactions"):
        tio.parse_input(text)


def test_unknown_key_reported():
    with pytest.raises(tio.InputError, match="Zone Lenght"):
        tio.parse_input(LAYOUT.replace("Zone Length", "Zone Lenght"))


def test_non_numeric_cell_reported():
    with pytest.raises(tio.InputError, match="Mesh Size"):
        tio.parse_input(LAYOUT.replace("Mesh Size,200", "Mesh Size,lots"))


def test_species_mismatch_suggests_name():
    bad = LAYOUT.replace(",CO,O2,CO2", ",CO,O3,CO2")
    with pytest.raises(tio.InputError, match="O2"):
        tio.parse_input(bad)


def test_missing_surface_species():
    with pytest.raises(tio.InputError, match="O\\*"):
        tio.parse_input(LAYOUT.replace(",CO*,O*,*", ",CO*,Q*,*"))


def test_inert_feed_gas():
    d = tio.parse_input(SMALL)
    assert d.inert_gases == ["Ar"]
    assert d.schedule().gases[-1] == "Ar"


def test_sections_in_any_order():
    blocks = LAYOUT.split("\n,,,\n")  # reactor, feed gases, feed surface, reactions, thermo
    assert len(blocks) == 5
    shuffled = "\n,,,\n".join([blocks[3], blocks[4] + "\n", blocks[0], blocks[1], blocks[2]])
    assert tio.parse_input(shuffled) == tio.parse_input(LAYOUT)


@pytest.mark.parametrize("name", sorted(p.name for p in INPUTS.glob("*.csv")))
def test_round_trip_shipped_inputs(name, tmp_path):
    d = tio.load_input(INPUTS / name)
    out = tio.save_input(d, tmp_path / name)
    again = tio.load_input(out)
    assert again == d
    assert tio.format_input(again) == tio.format_input(d)


@given(lengths=st.tuples(*[st.floats(0.5, 5.0)] * 3), temp=st.floats(300, 900),
       k=st.floats(1e-8, 1e8), mesh=st.integers(50, 400))
def test_round_trip_property(lengths, temp, k, mesh):
    d = tio.parse_input(SMALL)
    reactor = dataclasses.replace(d.reactor, zone_lengths=lengths, temperature=temp)
    reactions = [(eq, [repr(k), cells[1]]) for eq, cells in d.reactions]
    d2 = dataclasses.replace(d, reactor=reactor, reactions=reactions, mesh_size=mesh)
    assert tio.parse_input(tio.format_input(d2)) == d2


def test_experimental_round_trip(tmp_path):
    from tapwb.solver import TapModel
    from tapwb.reactor import build_mesh
    d = tio.parse_input(SMALL)
    model = TapModel(d.mechanism, d.reactor, build_mesh(d.reactor, d.mesh_size, d.catalyst_density),
                     d.schedule(), d.surface0, d.solver_config())
    res = model.simulate()
    tio.write_simulation(res, tmp_path)
    obs = tio.load_experimental(tmp_path / "flux_data", res.gas_names)
    assert set(obs.gases) == {"CO", "O2", "CO2", "Ar"}
    assert j_data(res, obs) < 1e-20
    assert (tmp_path / "thin_data" / "CO_star.csv").is_file()
    assert (tmp_path / "thin_data" / "vacant_sites.csv").is_file()


def test_experimental_headerless_and_errors(tmp_path):
    (tmp_path / "A.csv").write_text("0,0\n0.1,1\n0.2,0.5\n")
    obs = tio.load_experimental(tmp_path, ["A"])
    assert obs.curves["A"][1].tolist() == [0.0, 1.0, 0.5]
    (tmp_path / "B.csv").write_text("time,flux\n0,0\n0.2,1\n0.1,0.5\n")
    with pytest.raises(tio.InputError, match="row 3"):
        tio.load_experimental(tmp_path, ["B"])
    with pytest.raises(tio.InputError, match="C.csv"):
        tio.load_experimental(tmp_path, ["C"])


def test_resampled_flag():
    obs = ExperimentalCurves({"A": (np.array([0.0, 1.0]), np.zeros(2)),
                              "B": (np.array([0.0, 0.5, 1.0]), np.zeros(3))})
    assert obs.resampled


def test_prepare_output_copies_input(tmp_path):
    src = tmp_path / "in.csv"
    src.write_text(SMALL)
    root = tio.prepare_output(tmp_path / "out", input_path=src)
    assert (root / "in.csv").read_text() == SMALL
    for sub in ("flux_data", "thin_data", "sensitivity", "fitting"):
        assert (root / sub).is_dir()


def test_write_table_is_exact(tmp_path):
    x = np.array([[0.1, 1 / 3], [np.pi, 1e-300]])
    p = tio.write_table(tmp_path / "t.csv", ["a", "b"], x)
    back = np.loadtxt(p, delimiter=",", skiprows=1)
    assert np.array_equal(back, x)
