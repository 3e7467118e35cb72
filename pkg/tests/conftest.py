import logging

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "numerics", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("numerics")

# acceptance criteria append (number, passed, detail) here; printed in the terminal summary
ACCEPTANCE_LINES: dict[int, tuple[bool, str]] = {}


@pytest.fixture(autouse=True)
def _quiet_solver_warnings():
    logging.getLogger("fracground").setLevel(logging.ERROR)
    yield


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        ok, detail = ACCEPTANCE_LINES[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
