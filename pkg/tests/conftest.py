"""Shared helpers: the acceptance suite records one verdict line per criterion."""

import pytest

_VERDICTS = []


@pytest.fixture
def record():
    """``record(number, ok, detail)`` notes a criterion verdict for the summary."""

    def _record(number, ok, detail=""):
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        _VERDICTS.append((number, status, detail))
        print(f"criterion {number}: {status} {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(_VERDICTS, key=lambda v: v[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {status:<5} {detail}")
