import numpy as np
import pytest

from chernlattice.analysis import perimeter_path
from chernlattice.lattice import Gauge, reference_lattice, with_wall
from chernlattice.response import PulseSpec, time_evolve


@pytest.fixture(scope="session")
def lattice():
    return reference_lattice()


@pytest.fixture(scope="session")
def landau_lattice():
    return reference_lattice(Gauge.LANDAU_X)


@pytest.fixture(scope="session")
def ring():
    return perimeter_path(11)


@pytest.fixture(scope="session")
def pulse_trace(lattice):
    return time_evolve(lattice, (1, 1), PulseSpec(9600.0, 75.0), np.arange(0.0, 450.0, 0.5))


@pytest.fixture(scope="session")
def wall_trace(lattice):
    return time_evolve(with_wall(lattice), (1, 1), PulseSpec(9600.0, 50.0), np.arange(0.0, 500.0, 0.5))


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        request.config.stash[_VERDICTS].append((number, line))
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
