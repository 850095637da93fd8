import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from artifact.model import AttributeGrid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

COMPARATIVE_BREAKPOINTS = (
    [0.0, 0.0667, 0.4, 0.6667, 1.0],
    [0.0, 0.05, 0.3, 0.4, 0.5, 0.75, 1.0],
    [0.0, 0.0667, 0.2, 0.5333, 0.6667, 1.0],
)
COMPARATIVE_MEAN = np.array([0.0591, 0.0537, 0.0642, 0.0719, 0.0514, 0.0592, 0.0756, 0.0551, 0.1052,
                             0.0686, 0.0706, 0.0675, 0.0594, 0.0830, 0.0555])

# criterion lines collected by the acceptance suite, echoed in the summary
ACCEPTANCE_LINES = []


@pytest.fixture
def grid3():
    return AttributeGrid(tuple(np.array(t) for t in COMPARATIVE_BREAKPOINTS))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
