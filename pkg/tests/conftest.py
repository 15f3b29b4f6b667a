import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

from ncmart.filtration import Diagonal, martingale_from_terminal  # noqa: E402

DEMO_PARTITIONS = ([[0, 1, 2, 3]], [[0, 1], [2, 3]], [[0], [1], [2], [3]])


@pytest.fixture
def demo():
    """Classical dyadic martingale with terminal value diag(4, 0, 0, 0)."""
    F = Diagonal(DEMO_PARTITIONS)
    return martingale_from_terminal(np.diag([4.0, 0.0, 0.0, 0.0]), F)


def diag_of(x):
    return np.real_if_close(np.diag(np.asarray(x)))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
