import pytest

from qpolicy.mdp import build_frozenlake, build_gridworld


@pytest.fixture(scope="session")
def grid4():
    return build_gridworld(4, 4, 0.2, (3, 3), 0.95)


@pytest.fixture(scope="session")
def frozen8():
    return build_frozenlake(8, True, 0.95)
