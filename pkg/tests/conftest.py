import numpy as np
import pytest

from sumrule_lab.equilibrium import OutlierRate, equilibrium_measure, quartic_equilibrium
from sumrule_lab.jacobi import measure_to_jacobi
from sumrule_lab.poly import Polynomial

GAUSS = Polynomial([0, 0, 0.5])


def sc_density(x):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum(4 - x * x, 0.0)) / (2 * np.pi)


@pytest.fixture(scope="session")
def gauss_eq():
    return equilibrium_measure(GAUSS, method="onecut")


@pytest.fixture(scope="session")
def gauss_rate(gauss_eq):
    return OutlierRate(GAUSS, gauss_eq.measure)


@pytest.fixture(scope="session")
def quartic3():
    return quartic_equilibrium(3.0)


@pytest.fixture(scope="session")
def quartic3_jacobi(quartic3):
    return measure_to_jacobi(quartic3.measure, 302)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
