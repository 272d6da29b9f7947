import numpy as np
import pytest

from tgcmpc.bank import build_bank
from tgcmpc.vehicle import table1_vehicle


@pytest.fixture(scope="session")
def vehicle():
    return table1_vehicle()


@pytest.fixture(scope="session")
def small_bank(vehicle):
    """Three synthesized entries; enough for controller, bank and simulator tests."""
    return build_bank(vehicle, [10.0, 11.0, 15.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
