from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

F = Fraction


@pytest.fixture
def half():
    from sicta import fair

    return fair(2)


ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def acceptance():
    """Record one criterion's outcome; the summary is printed after the run."""

    def record(number, title, ok, detail=""):
        ACCEPTANCE_RESULTS[number] = (title, bool(ok), detail)
        print(f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
