import numpy as np
import pytest

from fdlkg import DomainSpec, NoiseSpec, build_basis


@pytest.fixture(scope="session")
def torus1():
    return build_basis(DomainSpec("torus", 1, 1.0), 16)


@pytest.fixture(scope="session")
def small_torus():
    return build_basis(DomainSpec("torus", 1, 1.0), 8)


@pytest.fixture(scope="session")
def interval():
    return build_basis(DomainSpec("interval", 1, 0.0), 10)


@pytest.fixture(scope="session")
def torus3():
    return build_basis(DomainSpec("torus", 3, 1.0), 19)


@pytest.fixture(scope="session")
def noise1(torus1):
    return NoiseSpec.inverse_sq(torus1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
