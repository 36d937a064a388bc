import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number: int, ok: bool, text: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {text}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
