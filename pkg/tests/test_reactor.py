import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tapwb.reactor import CATALYST, ReactorError, ReactorSpec, build_mesh, knudsen_diffusion


def test_knudsen_identity():
    assert knudsen_diffusion(13.5, 40, 400, 40, 400) == 13.5


def test_knudsen_co():
    assert knudsen_diffusion(13.5, 40, 400, 28, 400) == pytest.approx(13.5 * math.sqrt(40 / 28))
    assert knudsen_diffusion(13.5, 40, 400, 28, 400) == pytest.approx(16.14, abs=5e-3)


@given(m1=st.floats(1, 500), m2=st.floats(1, 500))
def test_knudsen_monotone_in_mass(m1, m2):
    d1, d2 = knudsen_diffusion(13.5, 40, 400, m1, 400), knudsen_diffusion(13.5, 40, 400, m2, 400)
    assert (d1 - d2) * (m1 - m2) <= 0


@given(T=st.floats(100, 2000), m=st.floats(1, 500))
def test_knudsen_scaling_law(T, m):
    d = knudsen_diffusion(13.5, 40, 400, m, T)
    assert d**2 * m / T == pytest.approx(13.5**2 * 40 / 400, rel=1e-10)


def test_knudsen_rejects_nonpositive():
    with pytest.raises(ReactorError):
        knudsen_diffusion(13.5, 40, 400, 0.0, 400)


def test_spec_validation():
    with pytest.raises(ReactorError):
        ReactorSpec(zone_voids=(0.4, 1.2, 0.4))
    with pytest.raises(ReactorError):
        ReactorSpec(zone_lengths=(3.0, -0.1, 2.9))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        ReactorSpec(zone_lengths=(0.1, 0.1, 0.1))
    assert any("3.5" in str(x.message) for x in w)


def test_uniform_mesh_when_density_zero():
    mesh = build_mesh(ReactorSpec(), 200, 0)
    assert mesh.n_cells == 200


def test_refined_mesh_counts():
    # catalyst zone 0.12 of 6 cm -> 4 base cells, each bisected 4 times
    spec = ReactorSpec(zone_lengths=(2.94, 0.12, 2.94))
    mesh = build_mesh(spec, 200, 4)
    assert mesh.catalyst_cells == 64
    assert mesh.n_cells == 200 - 4 + 64
    mesh2 = build_mesh(spec, 200, 2)
    assert mesh2.catalyst_cells == 16 and mesh2.n_cells == 200 - 4 + 16


def test_zone_boundaries_are_nodes():
    spec = ReactorSpec()
    mesh = build_mesh(spec, 200, 3)
    for b in spec.catalyst_bounds:
        assert np.min(np.abs(mesh.nodes - b)) < 1e-12
    assert np.all(np.diff(mesh.nodes) > 0)
    assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == pytest.approx(spec.length)
    cat = mesh.zones == CATALYST
    assert np.allclose(mesh.widths[cat].sum(), spec.zone_lengths[1])


@given(base=st.integers(20, 400), density=st.integers(0, 4))
def test_mesh_properties(base, density):
    spec = ReactorSpec(zone_lengths=(2.0, 1.0, 3.0))
    mesh = build_mesh(spec, base, density)
    n_cat_base = mesh.catalyst_cells // 2**density
    assert mesh.catalyst_cells == n_cat_base * 2**density
    assert mesh.n_cells == base - n_cat_base + mesh.catalyst_cells
    assert np.all(mesh.widths > 0)


def test_narrow_catalyst_warns():
    with pytest.warns(UserWarning):
        build_mesh(ReactorSpec(zone_lengths=(3.0, 0.01, 2.99)), 200, 0)


def test_mesh_rejects_bad_sizes():
    with pytest.raises(ReactorError):
        build_mesh(ReactorSpec(), 5, 0)
    with pytest.raises(ReactorError):
        build_mesh(ReactorSpec(), 200, -1)
