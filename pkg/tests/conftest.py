import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aeroguard.config import SimConfig

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def cfg():
    return SimConfig.default()


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def report():
    """Record one status line per acceptance criterion and echo it live."""

    def add(criterion, result):
        line = f"criterion {criterion:>2} {result.line()}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
