import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """record(n, passed, detail): one summary line per acceptance criterion."""

    def _record(n, passed, detail):
        ACCEPTANCE[n] = (None if passed is None else bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {n:>2} {status}: {detail}")
