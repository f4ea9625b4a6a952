import numpy as np
import pytest

from ancient_flows.acceptance import sphere_setup


@pytest.fixture(scope="session")
def sphere64():
    return sphere_setup(64)


@pytest.fixture(scope="session")
def sphere128():
    return sphere_setup(128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
