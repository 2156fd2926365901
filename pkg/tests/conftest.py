import pytest

_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""

    def report(number: int, name: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} | {detail}"
        _LINES.append((number, line))
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
