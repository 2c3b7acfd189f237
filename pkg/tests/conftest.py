import pytest

from maslov_stab.problem import (double_pulse_problem, poeschl_teller,
                                 scalar_pulse_problem)


def pt_levels(c: float, m: int):
    """Closed-form bound-state levels of the sech-squared well family."""
    return [c - (m - j) ** 2 for j in range(int(m))]


@pytest.fixture(scope="session")
def pulse_problem():
    return scalar_pulse_problem()


@pytest.fixture(scope="session")
def double_pulse():
    return double_pulse_problem()


@pytest.fixture(scope="session")
def pt11():
    return poeschl_teller(1.0, 1.0)


@pytest.fixture(scope="session")
def pt12():
    return poeschl_teller(1.0, 2.0)


@pytest.fixture(scope="session")
def pt052():
    return poeschl_teller(0.5, 2.0)


@pytest.fixture(scope="session")
def pt52():
    return poeschl_teller(5.0, 2.0)
