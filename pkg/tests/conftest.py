import pytest

from hjfield.hj import analyze
from hjfield.phase import builtin_model


@pytest.fixture(scope="session")
def pontryagin():
    return builtin_model("pontryagin")


@pytest.fixture(scope="session")
def euler():
    return builtin_model("euler")


@pytest.fixture(scope="session")
def pontryagin_report(pontryagin):
    return analyze(pontryagin)


@pytest.fixture(scope="session")
def euler_report(euler):
    return analyze(euler)
