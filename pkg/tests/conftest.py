import sys
import numpy as np
import pytest

from fgauss import FbmLiouville, Identity, RiemannLiouville, RngConfig, Separable, TimeGrid


@pytest.fixture
def grid64():
    return TimeGrid(1.0, 64)


@pytest.fixture
def rng():
    return RngConfig(20240611)


@pytest.fixture
def kernels():
    """Representative kernels keyed by short names."""
    return {
        "identity": Identity(),
        "separable": Separable(lambda s: 1.0 + np.asarray(s, float)),
        "rl25": RiemannLiouville(0.25),
        "rl50": RiemannLiouville(0.5),
        "fbm07": FbmLiouville(0.7),
        "fbm03": FbmLiouville(0.3),
    }


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
