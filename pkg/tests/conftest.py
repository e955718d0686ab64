from hypothesis import settings

# fixed example generation so statistical assertions are reproducible
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

import pytest

CRITERIA: list[str] = []


@pytest.fixture
def record():
    """record(n, ok, detail): print one pass/fail line for an acceptance criterion."""

    def _record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'} - {detail}"
        CRITERIA.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
