import numpy as np
import pytest

from lagflow.fields import Grid


@pytest.fixture(scope="session")
def grid32():
    return Grid(32)


@pytest.fixture(scope="session")
def grid64():
    return Grid(64)


@pytest.fixture()
def rng():
    return np.random.default_rng(987654321)
