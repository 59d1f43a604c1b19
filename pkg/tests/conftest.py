import numpy as np
import pytest

from laxlab.laxcore import REF
from laxlab.singlattice import classical_lattice


@pytest.fixture(scope="session")
def ref():
    return REF


@pytest.fixture(scope="session")
def ref_lattice():
    return classical_lattice(REF)


@pytest.fixture(scope="session")
def nearest_pole(ref_lattice):
    return min(ref_lattice.t, key=abs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
