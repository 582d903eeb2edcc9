import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from biwave.geometry import TargetManifold
from biwave.grid import PeriodicGrid

settings.register_profile(
    "biwave", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("biwave")


@pytest.fixture
def sphere():
    return TargetManifold.sphere(3)


@pytest.fixture
def flat():
    return TargetManifold.flat(3)


@pytest.fixture
def grid128():
    return PeriodicGrid(1, 128)


def great_circle_state(grid, omega=2.0):
    """u = (cos x, sin x, 0), u_t = omega (-sin x, cos x, 0) on a 1D grid."""
    x = grid.coordinates[0]
    u = np.stack([np.cos(x), np.sin(x), np.zeros_like(x)])
    ut = omega * np.stack([-np.sin(x), np.cos(x), np.zeros_like(x)])
    return u, ut


ACCEPTANCE_LINES = {}


def report_criterion(number, title, checks):
    """Record one acceptance line; checks maps a label to (value, passed). Returns overall pass."""
    ok = all(passed for _, passed in checks.values())
    detail = "; ".join(f"{label} {'ok' if passed else 'FAIL'} ({value})" for label, (value, passed) in checks.items())
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
