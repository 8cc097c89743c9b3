import os

import numpy as np
import pytest
from hypothesis import settings

from tapwb.problems import CaseSetup, co_oxidation_mechanism, co_oxidation_model

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SMALL = CaseSetup(total_time=0.5, n_steps=250, mesh_size=60, catalyst_density=2)


@pytest.fixture(scope="session")
def small_setup():
    return SMALL


@pytest.fixture(scope="session")
def co_truth_small():
    """Coarse CO-oxidation model at the true rate constants."""
    return co_oxidation_model(co_oxidation_mechanism(), SMALL)


@pytest.fixture(scope="session")
def co_truth_result(co_truth_small):
    return co_truth_small.simulate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=lambda k: (k.split("-")[0], k)):
        terminalreporter.write_line(mod.RESULTS[key])
