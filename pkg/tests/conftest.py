import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from icurl.mdp import TabularMdp  # noqa: E402


@pytest.fixture
def flip_chain():
    """Two states that swap every step, one action."""
    T = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return TabularMdp(T, [1.0, 0.0], 0.5)


@pytest.fixture
def two_state_choice():
    """Action 0 stays put, action 1 switches state."""
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = T[0, 1, 1] = T[1, 0, 1] = T[1, 1, 0] = 1.0
    return TabularMdp(T, [1.0, 0.0], 0.9)


_REPORT_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    return request.config.stash.setdefault(_REPORT_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
