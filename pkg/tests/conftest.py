import pytest

# one line per acceptance criterion, printed after the run
VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(criterion: str, ok: bool, detail: str) -> bool:
        VERDICTS.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
