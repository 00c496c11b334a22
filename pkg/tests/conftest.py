import numpy as np
import pytest

from embedded_jc.params import Ensemble, SystemParams, from_collective


@pytest.fixture
def jc_params():
    """Bare JC: one spin decoupled, transmon resonant with the cavity."""
    return SystemParams(g_c=1.0, g_m=0.0, ensembles=(Ensemble(1, 0.0),))


@pytest.fixture
def embedded_params():
    return from_collective(g_c=1.0, G=0.02, N_s=10**6, delta=0.0, Delta=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
