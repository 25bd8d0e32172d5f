import pytest

CRITERIA: dict[int, list[str]] = {}


@pytest.fixture
def record():
    """record(n, ok, detail) stores and prints the pass/fail line of acceptance criterion n."""

    def _record(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA.setdefault(n, []).append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            for line in CRITERIA[n]:
                terminalreporter.write_line(line)
