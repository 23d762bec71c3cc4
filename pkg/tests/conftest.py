import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import _shared  # noqa: E402


@pytest.fixture(scope="session")
def mc_sample():
    return _shared.mc_sample()


def pytest_terminal_summary(terminalreporter):
    if _shared.REPORT:
        terminalreporter.section("acceptance summary")
        for line in _shared.REPORT:
            terminalreporter.write_line(line)
