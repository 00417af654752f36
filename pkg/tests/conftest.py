import numpy as np
import pytest
from hypothesis import settings

from capillarity.lab.scan import cached_mesh

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def mesh3():
    return cached_mesh(3)


@pytest.fixture(scope="session")
def mesh4():
    return cached_mesh(4)


@pytest.fixture(scope="session")
def mesh5():
    return cached_mesh(5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
