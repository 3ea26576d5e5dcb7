import pytest

from ncg.fixtures import load_fixture
from ncg.suites import derive_rng


SCALAR_NAMES = ["z2", "z3", "pair2", "z2swap", "unit2"]
ALL_NAMES = SCALAR_NAMES + ["z2chart"]


@pytest.fixture(params=ALL_NAMES)
def fixture(request):
    return load_fixture(request.param)


@pytest.fixture(params=SCALAR_NAMES)
def scalar_fixture(request):
    return load_fixture(request.param)


@pytest.fixture
def chart_fixture():
    return load_fixture("z2chart")


@pytest.fixture
def rng():
    return derive_rng(2024, "tests")
