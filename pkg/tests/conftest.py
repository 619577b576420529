import pytest

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Record ``(criterion, passed, detail)``; echoed in the terminal summary."""

    def record(name: str, passed: bool, detail: str) -> None:
        line = f"{name:<5} {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[name] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
        terminalreporter.write_line(_ACCEPTANCE[name])
