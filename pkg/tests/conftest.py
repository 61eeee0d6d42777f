import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def tfhe_keys():
    from apache_sim.kernels.tfhe import TfheParams, tfhe_keygen

    return tfhe_keygen(TfheParams(), np.random.default_rng(2024))


@pytest.fixture(scope="session")
def cfg():
    from apache_sim.config import load_config

    return load_config()


@pytest.fixture
def rng():
    return np.random.default_rng(7)
