"""Weighted-coin mixtures of principal POMDPs and the posterior over principals."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    AdditiveUtility,
    History,
    PrincipalPomdp,
    ProblemSet,
    TableUtility,
    causal_obs_probability,
    weight_vector,
)


@dataclass(frozen=True, eq=False)
class MixturePomdp(PrincipalPomdp):
    """A POMDP over tagged states ``(j, s)``; ``tags[i]`` is the principal of state ``i``.

    Tags are 0-based; labels are synthesized as ``"{j+1}:{state}"``.
    """

    tags: tuple[int, ...] = ()
    base_states: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()


def build_mixture(problems: ProblemSet, weights: Sequence[float]) -> MixturePomdp:
    """The POMDP in which a hidden ``weights``-coin picks whose model is true.

    The observation kernel of a tagged state is the tagged principal's own
    kernel, so every row stays normalized.
    """
    w = weight_vector(weights, problems.k)
    principals = problems.principals
    sizes = [p.n_states for p in principals]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    S, A, O, n = int(offsets[-1]), len(problems.actions), len(problems.observations), problems.horizon

    labels, tags, base = [], [], []
    prior = np.zeros(S)
    transition = np.zeros((S, A, S))
    observation = np.zeros((S, O))
    for j, p in enumerate(principals):
        lo, hi = offsets[j], offsets[j + 1]
        labels.extend(f"{j + 1}:{s}" for s in p.states)
        tags.extend([j] * p.n_states)
        base.extend(range(p.n_states))
        prior[lo:hi] = w[j] * p.prior
        transition[lo:hi, :, lo:hi] = p.transition
        observation[lo:hi] = p.observation

    utility = _mixture_utility(principals, offsets, S, A)
    return MixturePomdp(
        states=tuple(labels),
        actions=problems.actions,
        observations=problems.observations,
        horizon=n,
        prior=prior,
        transition=transition,
        observation=observation,
        utility=utility,
        name="mixture",
        tags=tuple(tags),
        base_states=tuple(base),
        weights=tuple(float(x) for x in w),
    )


def _mixture_utility(principals, offsets, S, A):
    if all(isinstance(p.utility, AdditiveUtility) for p in principals):
        step = np.zeros((S, A, S))
        terminal = np.zeros(S)
        for j, p in enumerate(principals):
            lo, hi = offsets[j], offsets[j + 1]
            step[lo:hi, :, lo:hi] = p.utility.step
            terminal[lo:hi] = p.utility.terminal
        return AdditiveUtility(step, terminal)

    # mixed-tag sequences are unreachable and keep the default of 0
    entries = {}
    for j, p in enumerate(principals):
        lo = int(offsets[j])
        u = p.utility
        if isinstance(u, AdditiveUtility):
            if not np.all(u.step == u.step[:, :1, :]):
                raise TypeError(
                    f"principal {j + 1}: additive step rewards that depend on the action "
                    "cannot be mixed with table utilities"
                )
            # action-free step rewards: value the sequence with action 0 throughout
            value = lambda seq, u=u, n=p.horizon: u.value(seq, (0,) * n)
        else:
            value = u.value
        for seq in itertools.product(range(p.n_states), repeat=p.horizon + 1):
            v = value(seq)
            if v != 0:
                entries[tuple(lo + s for s in seq)] = v
    return TableUtility(entries, 0.0)


class PrincipalPosterior(NamedTuple):
    probabilities: np.ndarray
    degenerate: bool


def principal_posterior(problems: ProblemSet, weights: Sequence[float], history: History) -> PrincipalPosterior:
    """``P(B = j | o_<=i, Do(a_<i))`` for the mixture with the given weights.

    When every principal assigns the history probability 0 the result is
    uniform and ``degenerate`` is set.
    """
    w = weight_vector(weights, problems.k)
    likelihood = np.array(
        [causal_obs_probability(p, history.observations, history.actions) for p in problems.principals]
    )
    return posterior_from_likelihoods(w, likelihood)


def posterior_from_likelihoods(w: np.ndarray, likelihood: np.ndarray) -> PrincipalPosterior:
    if np.all(likelihood == likelihood[0]):
        # a common likelihood cancels exactly
        if likelihood[0] > 0:
            return PrincipalPosterior(w.copy(), False)
    joint = w * likelihood
    total = joint.sum()
    if total <= 0:
        return PrincipalPosterior(np.full(len(w), 1.0 / len(w)), True)
    return PrincipalPosterior(joint / total, False)
