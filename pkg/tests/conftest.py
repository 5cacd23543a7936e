import json

import numpy as np
import pytest

from pushcache.model.system import SystemConfig


@pytest.fixture
def two_point():
    """B=1, requests 0 or 1 with equal probability, eta=2. Optimal L is 0.5."""
    return SystemConfig(B=1, eta=2.0, pmf=[0.5, 0.5])


@pytest.fixture
def uniform_small():
    return SystemConfig.uniform(B=3, X=4, eta=1.4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def write_config(tmp_path):
    """Write a config mapping to a JSON file and return its path."""

    def _write(data, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write
