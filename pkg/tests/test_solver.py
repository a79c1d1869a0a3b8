import numpy as np
import pytest

from pareto_pomdp.core import (
    AdditiveUtility,
    PrincipalPomdp,
    ProblemSet,
    TableUtility,
    evaluate,
    evaluate_all,
)
from pareto_pomdp.instances import cake_problem, random_problem_set
from pareto_pomdp.mixture import build_mixture
from pareto_pomdp.oracle import brute_force_payoffs
from pareto_pomdp.solver import (
    bellman_solve,
    dominates,
    frontier_sweep,
    naive_solve,
    pareto_solve,
    tied_maxima,
)

from conftest import all_histories, random_weights

TOL = 1e-9


def _chosen(res, history):
    return int(np.argmax(res.policy.distribution(history)))


def test_cake_pareto_is_pi_hat(cake):
    from pareto_pomdp.core import History

    res = pareto_solve(cake, [0.5, 0.5])
    assert _chosen(res, History((0,), ())) == 0
    assert _chosen(res, History((1,), ())) == 2
    np.testing.assert_allclose(res.payoff, [27.0, 27.0], atol=TOL)


def test_alice_alone(cake):
    res = bellman_solve(cake.principals[0])
    assert res.payoff[0] == pytest.approx(30.0, abs=TOL)
    for table in res.policy.tables:
        for d in table.values():
            assert d[0] == 1.0


def test_bellman_on_cake_mixture(cake):
    res = bellman_solve(build_mixture(cake, [0.5, 0.5]))
    assert res.payoff[0] == pytest.approx(27.0, abs=TOL)
    np.testing.assert_allclose(evaluate_all(cake, res.policy), [27.0, 27.0], atol=TOL)


@pytest.mark.parametrize("seed", range(25))
def test_bellman_matches_exhaustive_search(seed):
    problems = random_problem_set(seed, k=1, max_actions=2, max_observations=2, max_horizon=2)
    res = bellman_solve(problems.principals[0])
    best = brute_force_payoffs(problems).max()
    assert res.payoff[0] == pytest.approx(best, abs=TOL)


@pytest.mark.parametrize("seed", range(25))
def test_pareto_single_weight_is_bellman(seed):
    problems = random_problem_set(seed)
    one = pareto_solve(problems, [1.0, 0.0])
    alone = bellman_solve(problems.principals[0])
    assert one.payoff[0] == pytest.approx(alone.payoff[0], abs=TOL)


@pytest.mark.parametrize("seed", range(40))
def test_pareto_equals_mixture_bellman(seed):
    problems = random_problem_set(seed, k=2 + (seed % 4 == 0))
    w = random_weights(np.random.default_rng(seed), problems.k)
    direct = pareto_solve(problems, w)
    via_mix = bellman_solve(build_mixture(problems, w))
    np.testing.assert_allclose(direct.payoff, evaluate_all(problems, via_mix.policy), atol=TOL)
    assert w @ direct.payoff == pytest.approx(via_mix.payoff[0], abs=TOL)


@pytest.mark.parametrize("seed", range(15))
def test_payoff_matches_evaluate(seed):
    problems = random_problem_set(seed)
    res = pareto_solve(problems, [0.25, 0.75])
    np.testing.assert_allclose(res.payoff, evaluate_all(problems, res.policy), atol=TOL)


def test_determinism():
    problems = random_problem_set(11)
    a = pareto_solve(problems, [0.4, 0.6])
    b = pareto_solve(problems, [0.4, 0.6])
    assert a.payoff.tobytes() == b.payoff.tobytes()
    for ta, tb in zip(a.policy.tables, b.policy.tables):
        assert ta.keys() == tb.keys()
        assert all(ta[h].tobytes() == tb[h].tobytes() for h in ta)


def _scaled(problems, j, c):
    p = problems.principals[j]
    u = p.utility
    if isinstance(u, AdditiveUtility):
        u2 = AdditiveUtility(u.step * c, u.terminal * c)
    else:
        u2 = TableUtility({s: v * c for s, v in u.entries.items()}, u.default * c)
    scaled = PrincipalPomdp(p.states, p.actions, p.observations, p.horizon, p.prior, p.transition, p.observation, u2, p.name)
    ps = list(problems.principals)
    ps[j] = scaled
    return ProblemSet(tuple(ps))


@pytest.mark.parametrize("seed", range(15))
def test_scale_covariance(seed):
    problems = random_problem_set(seed)
    c = 4.0  # power of two keeps the rescaling exact
    w = np.array([0.5, 0.5])
    w_scaled = np.array([w[0] / c, w[1]])
    w_scaled /= w_scaled.sum()
    base = pareto_solve(problems, w)
    other = pareto_solve(_scaled(problems, 0, c), w_scaled)
    for h in all_histories(problems):
        assert base.argmax_set(h) == other.argmax_set(h)


def test_tied_maxima_uses_label_order():
    assert list(tied_maxima(np.array([1.0, 3.0, 3.0]))) == [1, 2]
    assert list(tied_maxima(np.zeros(3))) == [0, 1, 2]


def test_zero_probability_history_gets_first_action():
    problems = cake_problem(alice_red=1.0, bob_red=1.0)
    from pareto_pomdp.core import History

    res = pareto_solve(problems, [0.5, 0.5])
    assert np.all(res.scores[History((1,), ())] == 0)
    assert _chosen(res, History((1,), ())) == 0


# -- frontier ----------------------------------------------------------------


def test_cake_frontier(cake):
    points = frontier_sweep(cake, 101)
    payoffs = {tuple(np.round(p.payoff, 9)) for p in points}
    assert {(30.0, 0.0), (29.0, 18.0), (27.0, 27.0), (18.0, 29.0), (0.0, 30.0)} <= payoffs
    w1 = [p.weights[0] for p in points]
    assert w1 == sorted(w1)
    for p in points:
        assert not any(dominates(q.payoff, p.payoff) for q in points)


def test_cake_frontier_grid_two(cake):
    payoffs = [tuple(p.payoff) for p in frontier_sweep(cake, 2)]
    assert payoffs == [(0.0, 30.0), (30.0, 0.0)]


def test_identical_principals_collapse():
    p = random_problem_set(3, k=1).principals[0]
    problems = ProblemSet((p, p))
    assert len(frontier_sweep(problems, 21)) == 1


def test_frontier_needs_two_principals():
    with pytest.raises(ValueError):
        frontier_sweep(random_problem_set(0, k=3), 5)
    with pytest.raises(ValueError):
        frontier_sweep(cake_problem(), 1)


# -- fixed-weight baseline ---------------------------------------------------


def test_naive_low_r(cake):
    res = naive_solve(cake, 0.2)
    for d in res.policy.tables[0].values():
        assert d[2] == 1.0
    assert res.payoff[0] == pytest.approx(0.0, abs=TOL)


def test_naive_middle_r(cake):
    res = naive_solve(cake, 0.5)
    np.testing.assert_allclose(res.payoff, [20.0, 20.0], atol=TOL)


def test_naive_breakpoint_with_selection(cake):
    res = naive_solve(cake, 1 / 3, {"red": "none-all", "green": "none-all"})
    assert res.payoff[0] == pytest.approx(0.0, abs=TOL)
    assert res.payoff[0] <= 20.0


def test_naive_rejects_non_maximizer(cake):
    with pytest.raises(ValueError):
        naive_solve(cake, 0.5, {"red": "all-none"})


def test_naive_r_out_of_range(cake):
    with pytest.raises(ValueError):
        naive_solve(cake, 1.5)


@pytest.mark.parametrize("seed", range(10))
def test_naive_shared_beliefs_matches_pareto(seed):
    # with common beliefs the fixed-weight rule is already Pareto-optimal
    problems = random_problem_set(seed, shared_beliefs=True, sparsity=0.0)
    r = 0.3
    naive = naive_solve(problems, r)
    pareto = pareto_solve(problems, [r, 1 - r])
    assert np.array([r, 1 - r]) @ naive.payoff == pytest.approx(np.array([r, 1 - r]) @ pareto.payoff, abs=1e-8)
