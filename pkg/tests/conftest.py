import pytest

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance_log():
    """Record ``criterion -> (passed, detail)`` for the end-of-run summary."""

    def record(criterion: int, passed: bool, detail: str):
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} | {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
