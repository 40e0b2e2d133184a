from importlib.resources import files

import numpy as np
import pytest

from aggrekin import State, load_params


def data_path(name: str):
    return files("aggrekin") / "data" / name


@pytest.fixture(scope="session")
def fig3():
    return load_params(data_path("fig3.json"))


@pytest.fixture(scope="session")
def fig4():
    return load_params(data_path("fig4.json"))


@pytest.fixture(scope="session")
def fig5():
    return load_params(data_path("fig5.json"))


@pytest.fixture(scope="session")
def init():
    return State(2.0, 4.0, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
