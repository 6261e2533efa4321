import pytest

from rabi_exact.model import ModelParams


@pytest.fixture
def resonant_weak():
    return ModelParams(0.1, 1.0)


@pytest.fixture
def resonant_strong():
    return ModelParams(1.0, 1.0)


_CRITERIA: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, ok, detail)."""

    def record(number, ok, detail=""):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _CRITERIA[str(number)] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (len(k), k)):
        terminalreporter.write_line(_CRITERIA[key])
