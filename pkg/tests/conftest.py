import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cp3.core import PulseSequence
from cp3.tables import lookup

settings.register_profile("cp3", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("cp3")


@pytest.fixture(scope="session")
def table():
    """Printed reference sequences by label."""
    return lambda label: lookup(label).sequence


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_pulse(theta=np.pi / 4):
    return PulseSequence.strength([theta])
