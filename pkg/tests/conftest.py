import pytest

ACCEPTANCE_LINES: list[str] = []


def record(name: str, passed: bool, detail: str = ""):
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
    print(ACCEPTANCE_LINES[-1])


@pytest.fixture
def criterion():
    def check(name, passed, detail=""):
        record(name, bool(passed), detail)
        assert passed, f"{name}: {detail}"
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
