import pytest

from loggas.equilibrium import solve_equilibrium
from loggas.potentials import Potential


@pytest.fixture(scope="session")
def eq_quadratic():
    return solve_equilibrium(Potential.quadratic())


@pytest.fixture(scope="session")
def eq_quartic_half():
    return solve_equilibrium(Potential.quartic_minus(0.5))


@pytest.fixture(scope="session")
def eq_quartic_one():
    return solve_equilibrium(Potential.quartic_minus(1.0))
