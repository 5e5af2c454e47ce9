import logging

import numpy as np
import pytest
from dotenv import load_dotenv

from Harness.dataset import synthesize_corpus, write_corpus
from Network.inputs import BackboneConfig, CpConfig, NetworkConfig
from Network.model import build_network
from Utilities.helpers import make_rng


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run the slow experiments"
    )


def pytest_configure(config):
    load_dotenv(dotenv_path=".env")
    config.addinivalue_line("markers", "slow: trains a toy network for many iterations")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(0)


@pytest.fixture
def toy_config() -> NetworkConfig:
    """H0 = 16, width-4 backbone, k = 8."""
    return NetworkConfig(backbone=BackboneConfig(input_size=16, width=4), cp=CpConfig(k=8))


@pytest.fixture
def toy_network(toy_config):
    return build_network(toy_config, seed=0)


@pytest.fixture
def synthetic_samples():
    return synthesize_corpus(6, size=24, seed=0)


@pytest.fixture
def synthetic_dataset(tmp_path, synthetic_samples):
    return write_corpus(synthetic_samples, tmp_path / "corpus")


@pytest.fixture(autouse=True)
def reset_package_logger():
    yield
    # main() attaches a stderr handler bound to the stream of the current test
    root = logging.getLogger("jldcf")
    for handler in list(root.handlers):
        root.removeHandler(handler)
