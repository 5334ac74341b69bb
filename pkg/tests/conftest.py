import sys

import numpy as np
import pytest

from pulse_corridor import (
    CorridorSpec,
    NmbParams,
    OneCycle,
    design_period,
    design_weight,
    plant_from_nmb,
    synthesize_modulation,
)

# worked neuromuscular-blockade design
K2, K4 = -0.0940, 0.0313
BOUNDS = (5.0, 45.0, 200.0, 5000.0)
T_RANGE = (15.0, 45.0)


def expm_eig(M, t):
    """Oracle exponential through the eigendecomposition (distinct real spectrum)."""
    w, V = np.linalg.eig(M)
    return np.real(V @ np.diag(np.exp(w * t)) @ np.linalg.inv(V))


def random_chain(rng, lo=0.01, hi=1.0):
    """Random chain plant with well separated rates."""
    from pulse_corridor import PlantLTI

    while True:
        a = np.exp(rng.uniform(np.log(lo), np.log(hi), 3))
        if min(abs(a[0] - a[1]), abs(a[0] - a[2]), abs(a[1] - a[2])) > 0.05 * a.max():
            g = np.exp(rng.uniform(np.log(0.05), np.log(1.0), 2))
            return PlantLTI(*a, *g)


def random_period(rng, plant):
    """Period in the regime where the slowest mode decays by at most e^-5 per cycle."""
    return float(rng.uniform(0.1, 5.0) / min(plant.rates))


@pytest.fixture(scope="session")
def nmb():
    return NmbParams()


@pytest.fixture(scope="session")
def plant(nmb):
    return plant_from_nmb(nmb)


@pytest.fixture(scope="session")
def hill(nmb):
    return nmb.hill()


@pytest.fixture(scope="session")
def spec(hill):
    return CorridorSpec.measured(2.0, 10.0, hill)


@pytest.fixture(scope="session")
def period(plant, spec):
    return design_period(plant, spec, T_RANGE)


@pytest.fixture(scope="session")
def cycle(plant, spec, period):
    lam = design_weight(plant, period.T, spec)
    return OneCycle.from_parameters(plant, period.T, lam)


@pytest.fixture(scope="session")
def modulation(cycle, hill):
    return synthesize_modulation(cycle, (K2, K4), BOUNDS, hill)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[n])
