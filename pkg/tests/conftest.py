import numpy as np
import pytest

from bubblepde.model import ModelSpec, heston


@pytest.fixture(scope="session")
def heston_spec():
    return heston()


@pytest.fixture(scope="session")
def explosive_spec():
    """Mean-reverting vol-of-vol with cubic asset volatility; the auxiliary drift grows like y^4."""
    return ModelSpec("-1*y", "y", "y^3", 0.5, "explosive")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
