"""
Pytest configuration and reusable fixtures for the relay downlink simulator.
"""

import logging

import numpy as np
import pytest
from loguru import logger

from src.ScenarioConfig import ScenarioConfig
from src.Topology import Topology, build_topology


@pytest.fixture
def small_config() -> ScenarioConfig:
    """
    Two relays with two mobiles each, two direct mobiles, two subchannels.
    Small enough for full frames to run in milliseconds.
    """
    return ScenarioConfig(
        M=2, N=2, K0=4, Km=2, frames_per_trial=3, max_iter=200, seed=3
    )


@pytest.fixture
def default_config() -> ScenarioConfig:
    return ScenarioConfig()


@pytest.fixture
def small_topology(small_config: ScenarioConfig) -> Topology:
    return build_topology(small_config, seed=7)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def intercept_loguru_logs(caplog):
    """
    Redirect loguru logs to standard logging so pytest caplog can capture them.
    """

    class PropagateHandler(logging.Handler):
        def emit(self, record):
            logging.getLogger(record.name).handle(record)

    logging.basicConfig(level=logging.DEBUG)  # ensure root logger handles all messages
    logger.remove()  # remove default loguru handlers
    logger.add(PropagateHandler(), level="DEBUG")
    yield
    logger.remove()
