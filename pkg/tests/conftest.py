import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
