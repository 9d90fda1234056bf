import numpy as np
import pytest

from qhydro.fields import Constants, Grid


@pytest.fixture
def grid1d():
    return Grid.cube(1, 256, 20.0)


@pytest.fixture
def grid2d():
    return Grid.cube(2, 64, 4 * np.pi)


@pytest.fixture
def natural():
    return Constants()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record and print one pass/fail line per acceptance criterion."""

    def _verdict(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
