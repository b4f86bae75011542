import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_CRITERIA = {}


class CriterionLog:
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def record(self, number, checks: dict, elapsed: float, limit: float, note: str = ""):
        failed = [name for name, ok in checks.items() if not ok]
        if elapsed >= limit:
            failed.append(f"runtime {elapsed:.1f}s >= {limit:g}s")
        status = "PASS" if not failed else "FAIL"
        detail = f"{elapsed:.1f}s (limit {limit:g}s)"
        if failed:
            detail += "; failed: " + ", ".join(failed)
        if note:
            detail += "; " + note
        _CRITERIA[number] = f"criterion {number}: {status}  {detail}"
        return not failed


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=str):
        terminalreporter.write_line(_CRITERIA[key])
