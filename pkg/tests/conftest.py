import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=200,
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def sin_u0():
    return lambda x: np.sin(2 * np.pi * x)


ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; the lines are repeated in the terminal summary."""

    def record(number: int, name: str, passed: bool, detail: str):
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {name} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
