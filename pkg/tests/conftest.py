import numpy as np
import pytest

from gaeq.algebra import get_algebra

ALGEBRA_NAMES = ["ega", "pga", "cga"]


@pytest.fixture(scope="session", params=ALGEBRA_NAMES)
def any_algebra(request):
    return get_algebra(request.param)


@pytest.fixture(scope="session")
def ega():
    return get_algebra("ega")


@pytest.fixture(scope="session")
def pga():
    return get_algebra("pga")


@pytest.fixture(scope="session")
def cga():
    return get_algebra("cga")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
