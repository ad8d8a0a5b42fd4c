import numpy as np
import pytest

from _acceptance_log import LINES as _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance summary")
        terminalreporter.write_line("------------------")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from crossroads.nn import DuelingQNetwork


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_arch(resolution=8, in_channels=2, n_actions=2, hidden=6):
    """A hand-sized architecture (a few hundred parameters) for oracle tests."""
    return {
        "input_shape": [in_channels, resolution, resolution],
        "conv": [[3, 3, 2]],
        "hidden": hidden,
        "n_actions": n_actions,
    }


def tiny_network(rng, dtype=np.float64, **kwargs):
    return DuelingQNetwork(tiny_arch(**kwargs), rng, dtype=dtype)
