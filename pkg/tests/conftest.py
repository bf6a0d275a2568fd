import math
import sys

import numpy as np
import pytest
from loguru import logger

from core.config import settings
from core.measures import sample_gff
from core.spectral_field import ModeTruncation, TorusSpec, trig_field

SQRT2_HALF = math.sqrt(2.0) / 2.0


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte Carlo checks with large sample counts")


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    settings.PHILAB_PROGRESS = False
    settings.PHILAB_THREADS = 2
    logger.remove()
    logger.add(sys.stderr, level="WARNING")
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def t1():
    return TorusSpec(1)


@pytest.fixture
def t2():
    return TorusSpec(2)


@pytest.fixture
def t3():
    return TorusSpec(3)


@pytest.fixture
def cos_field(t1):
    """sqrt(2) cos(2 pi x) at cutoff 1."""
    return trig_field(t1, [((1,), SQRT2_HALF)])


@pytest.fixture
def random_field(rng):
    """A GFF draw on the given torus and cutoff, scaled by ``scale``."""

    def make(torus, N, scale=1.0, size=None):
        return sample_gff(ModeTruncation(N, torus.d), torus, rng, size) * scale

    return make
