import sys

import numpy as np
import pytest

from liehmc.lie_core import make_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def so3():
    return make_geometry("SO", 3)


@pytest.fixture(scope="session")
def sl2():
    return make_geometry("SL", 2)


@pytest.fixture(scope="session")
def gl2():
    return make_geometry("GLplus", 2)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
