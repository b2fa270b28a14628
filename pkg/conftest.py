import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from models.graph import DegreeInstance, GraphModel
from models.sat import CnfInstance, SatModel
from models.table import TableInstance, TableModel

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))

DATA_DIR = Path(__file__).parent / "data"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def tiny_cnf():
    # (x1 v x2 v x3) & (-x1 v -x2 v x3): 6 of the 8 assignments satisfy it
    return CnfInstance(3, ((1, 2, 3), (-1, -2, 3)))


@pytest.fixture
def tiny_sat_model(tiny_cnf):
    return SatModel(tiny_cnf)


@pytest.fixture
def example_graph():
    return DegreeInstance((2, 2, 2, 1, 3))


@pytest.fixture
def example_graph_model(example_graph):
    return GraphModel(example_graph)


@pytest.fixture
def small_table():
    return TableInstance((2, 1, 1), (1, 2, 1), branch='column')


@pytest.fixture
def small_table_model(small_table):
    return TableModel(small_table)
