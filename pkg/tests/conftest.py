import math

import numpy as np
import pytest

from pdhjb import (BolzaProblem, DiscretePath, TimeGrid, make_lagrangian,
                   make_terminal_cost)


@pytest.fixture(scope="session")
def quadratic():
    return make_lagrangian("quadratic")


@pytest.fixture(scope="session")
def power_three_halves():
    return make_lagrangian("power:1.5")


@pytest.fixture(scope="session")
def lq_problem(quadratic):
    """Quadratic running cost with terminal (x(T) - 1)^2: closed-form value
    (1 - x0)^2 / (1 + 2 (T - t0)) and viscosity gap log(1 + 2 (T - t0)) / (2n)."""
    h = make_terminal_cost("terminal_square", {"center": 1.0})
    return BolzaProblem(quadratic, h, 1.0, 1)


@pytest.fixture(scope="session")
def sqrt_problem(power_three_halves):
    """|a|^(3/2) running cost with the singleton sqrt-path constraint:
    value sqrt(2) (T^(1/4) - t0^(1/4)) on the target, +infinity off it."""
    h = make_terminal_cost("sqrt_singleton")
    return BolzaProblem(power_three_halves, h, 1.0, 1)


@pytest.fixture(scope="session")
def sqrt_path(sqrt_problem):
    target = sqrt_problem.terminal_cost.target_path
    return DiscretePath(target.grid, target.values.copy())


def lq_value(x0: float, t0: float, horizon: float = 1.0, center: float = 1.0):
    return (center - x0) ** 2 / (1.0 + 2.0 * (horizon - t0))


def lq_gap(n: int, t0: float = 0.0, horizon: float = 1.0):
    return math.log(1.0 + 2.0 * (horizon - t0)) / (2.0 * n)


def random_path(rng, dim=1, nodes=5, horizon=1.0):
    ts = np.sort(rng.uniform(0.0, horizon, nodes - 2))
    ts = np.concatenate([[0.0], ts, [horizon]])
    ts = np.unique(ts)
    while ts.size < 2:
        ts = np.array([0.0, horizon])
    return DiscretePath(TimeGrid(ts), rng.normal(0.0, 1.0, (ts.size, dim)))
