import numpy as np
import pytest

from censbounds.dgp import DGPParams, true_nuisances
from censbounds.oracle import QuadratureSpec, population_truth_dgp
from censbounds.simulation import generate_population


@pytest.fixture(scope="session")
def dgp_truth():
    return population_truth_dgp(DGPParams(), QuadratureSpec())


@pytest.fixture(scope="session")
def small_population():
    return generate_population(DGPParams(N=300_000, seed=11))


@pytest.fixture(scope="session")
def large_sample():
    """One n = 200,000 draw from the simulation design with its true nuisances."""
    pop = generate_population(DGPParams(N=200_000, seed=2024))
    from censbounds.data import Dataset

    d = Dataset(pop.x, pop.a, pop.c, pop.y, ["x1"])
    return d, true_nuisances(pop.x, pop.params)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_lines(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
