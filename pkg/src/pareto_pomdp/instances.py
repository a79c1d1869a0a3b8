"""Built-in problems: the cake-betting example and seeded random instances."""

from __future__ import annotations

import itertools

import numpy as np

from .core import AdditiveUtility, PrincipalPomdp, ProblemSet, TableUtility

CAKE_ACTIONS = ("all-none", "half-half", "none-all")
CAKE_OBSERVATIONS = ("red", "green")
CAKE_STATES = ("red", "green") + CAKE_ACTIONS


def _cake_pomdp(name: str, p_red: float, slices: tuple[float, float, float]) -> PrincipalPomdp:
    S, A = len(CAKE_STATES), len(CAKE_ACTIONS)
    prior = np.array([p_red, 1.0 - p_red, 0.0, 0.0, 0.0])
    transition = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            # the action fixes the split; split states are absorbing
            transition[s, a, 2 + a if s < 2 else s] = 1.0
    observation = np.zeros((S, 2))
    observation[0, 0] = observation[1, 1] = 1.0
    observation[2:, :] = 0.5  # never observed within the horizon
    terminal = np.array([0.0, 0.0, *slices])
    return PrincipalPomdp(
        states=CAKE_STATES,
        actions=CAKE_ACTIONS,
        observations=CAKE_OBSERVATIONS,
        horizon=1,
        prior=prior,
        transition=transition,
        observation=observation,
        utility=AdditiveUtility(np.zeros((S, A, S)), terminal),
        name=name,
    )


def cake_problem(alice_red: float = 0.9, bob_red: float = 0.1) -> ProblemSet:
    """Alice and Bob splitting a cake whose colour they disagree about.

    Each values no cake, half, the whole at 0, 20, 30.
    """
    alice = _cake_pomdp("Alice", alice_red, (30.0, 20.0, 0.0))
    bob = _cake_pomdp("Bob", bob_red, (0.0, 20.0, 30.0))
    return ProblemSet((alice, bob))


def pi_hat_choice(history) -> int:
    """Whole cake to Alice on red, to Bob on green."""
    return 0 if history.observations[0] == 0 else 2


def _stochastic(rng: np.random.Generator, shape, sparsity: float) -> np.ndarray:
    rows = rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])
    if sparsity > 0:
        mask = rng.random(rows.shape) < sparsity
        # keep at least one entry per row
        keep = rng.integers(shape[-1], size=shape[:-1])
        np.put_along_axis(mask, keep[..., None], False, axis=-1)
        rows = np.where(mask, 0.0, rows)
        rows /= rows.sum(axis=-1, keepdims=True)
    return rows


def random_pomdp(
    rng: np.random.Generator,
    n_states: int,
    actions,
    observations,
    horizon: int,
    utility: str = "table",
    sparsity: float = 0.0,
    name: str = "",
) -> PrincipalPomdp:
    S, A, O = n_states, len(actions), len(observations)
    if utility == "table":
        values = rng.uniform(0.0, 10.0, size=(S,) * (horizon + 1))
        entries = {seq: float(values[seq]) for seq in itertools.product(range(S), repeat=horizon + 1)}
        u = TableUtility(entries, 0.0)
    else:
        u = AdditiveUtility(rng.normal(size=(S, A, S)), rng.normal(size=S))
    return PrincipalPomdp(
        states=tuple(f"s{i}" for i in range(S)),
        actions=tuple(actions),
        observations=tuple(observations),
        horizon=horizon,
        prior=_stochastic(rng, (S,), sparsity),
        transition=_stochastic(rng, (S, A, S), sparsity),
        observation=_stochastic(rng, (S, O), sparsity),
        utility=u,
        name=name,
    )


def random_problem_set(
    seed: int,
    k: int = 2,
    max_states: int = 3,
    max_actions: int = 3,
    max_observations: int = 3,
    max_horizon: int = 2,
    shared_beliefs: bool = False,
    sparsity: float = 0.0,
    utility: str | None = None,
) -> ProblemSet:
    """A seeded random collection of compatible POMDPs.

    Sizes are drawn uniformly up to the given maxima.  With
    ``shared_beliefs`` every principal gets the same prior, transition and
    observation tables and differs only in utility.
    """
    rng = np.random.default_rng(seed)
    A = int(rng.integers(1, max_actions + 1))
    O = int(rng.integers(1, max_observations + 1))
    n = int(rng.integers(1, max_horizon + 1))
    actions = tuple(f"a{i}" for i in range(A))
    observations = tuple(f"o{i}" for i in range(O))
    kind = utility or ("table" if rng.random() < 0.5 else "additive")
    pomdps = []
    for j in range(k):
        S = pomdps[0].n_states if shared_beliefs and pomdps else int(rng.integers(1, max_states + 1))
        p = random_pomdp(rng, S, actions, observations, n, kind, sparsity, name=f"P{j + 1}")
        if shared_beliefs and pomdps:
            base = pomdps[0]
            p = PrincipalPomdp(
                base.states, actions, observations, n,
                base.prior, base.transition, base.observation, p.utility, p.name,
            )
        pomdps.append(p)
    return ProblemSet(tuple(pomdps))
