import numpy as np
import pytest

from pareto_pomdp.core import FullMemoryPolicy, iter_histories
from pareto_pomdp.instances import cake_problem, pi_hat_choice

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def cake():
    return cake_problem()


@pytest.fixture
def pi_hat(cake):
    return FullMemoryPolicy.from_function(cake.actions, cake.observations, 1, pi_hat_choice)


@pytest.fixture
def half_half(cake):
    return FullMemoryPolicy.constant(cake.actions, cake.observations, 1, 1)


def random_policy(rng, problems, deterministic=False):
    A = len(problems.actions)

    def rule(h):
        if deterministic:
            return int(rng.integers(A))
        return rng.dirichlet(np.ones(A))

    return FullMemoryPolicy.from_function(problems.actions, problems.observations, problems.horizon, rule)


def random_weights(rng, k=2):
    w = rng.dirichlet(np.ones(k))
    w[-1] = 1.0 - w[:-1].sum()
    return w


def all_histories(problems):
    A, O = len(problems.actions), len(problems.observations)
    for i in range(1, problems.horizon + 1):
        yield from iter_histories(O, A, i)
