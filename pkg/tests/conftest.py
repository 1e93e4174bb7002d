import pytest

_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def report():
    """Record one acceptance verdict; the summary is printed at session end."""

    def record(criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
