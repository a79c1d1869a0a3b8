"""Exact policy optimization by backward induction over the history tree.

``bellman_solve`` optimizes a single POMDP.  ``pareto_solve`` maximizes, at
every history ``h``, the sum over principals of ``w_j * P_j(h | Do) * Val_j``
using each principal's own model; ``frontier_sweep`` runs it over a weight
grid.  ``naive_solve`` is the fixed-weight baseline that mixes normalized
conditional expectations and therefore cannot settle bets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DEFAULT_TABLE_CAP,
    FullMemoryPolicy,
    History,
    PrincipalPomdp,
    ProblemSet,
    backward_pass,
    check_size,
    one_hot,
    weight_vector,
)
from .problem_io import history_key

# relative tolerance under which two action scores count as tied
TIE_TOL = 1e-12
NAIVE_TIE_TOL = 1e-9
DEDUP_TOL = 1e-7
DOMINANCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SolveResult:
    """A policy, its payoff vector, and the per-history scores it maximized."""

    policy: FullMemoryPolicy
    payoff: np.ndarray
    weights_used: np.ndarray
    scores: dict[History, np.ndarray] = field(default_factory=dict)

    def argmax_set(self, history: History, tol: float = TIE_TOL) -> tuple[int, ...]:
        return tuple(int(a) for a in tied_maxima(self.scores[history], tol))


@dataclass(frozen=True, eq=False)
class FrontierPoint:
    weights: np.ndarray
    payoff: np.ndarray
    policy: FullMemoryPolicy


def tied_maxima(scores: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    best = scores.max()
    return np.flatnonzero(scores >= best - tol * max(1.0, abs(best)))


class _Recorder:
    """Collects the chosen pure action of every history into step tables."""

    def __init__(self, horizon: int, n_actions: int):
        self.tables: list[dict[History, np.ndarray]] = [{} for _ in range(horizon)]
        self.scores: dict[History, np.ndarray] = {}
        self.n_actions = n_actions

    def record(self, history: History, action: int, scores: np.ndarray) -> np.ndarray:
        dist = one_hot(action, self.n_actions)
        self.tables[history.step - 1][history] = dist
        self.scores[history] = scores
        return dist

    def policy(self, actions, observations, horizon) -> FullMemoryPolicy:
        return FullMemoryPolicy(tuple(actions), tuple(observations), horizon, tuple(self.tables))


def _weighted_solve(
    pomdps: Sequence[PrincipalPomdp], w: np.ndarray, refine: bool, cap: int
) -> tuple[FullMemoryPolicy, np.ndarray, dict]:
    first = pomdps[0]
    check_size(first.n_observations, first.n_actions, first.horizon, cap)
    rec = _Recorder(first.horizon, first.n_actions)

    def decide(h, q, masses):
        score = w @ q
        choices = tied_maxima(score)
        if refine and len(choices) > 1:
            # secondary objective with every principal weighted; keeps zero-weight
            # principals from being handed weakly dominated choices
            secondary = q[:, choices].sum(axis=0)
            choices = choices[tied_maxima(secondary)]
        return rec.record(h, int(choices[0]), score)

    payoff = backward_pass(pomdps, decide)
    return rec.policy(first.actions, first.observations, first.horizon), payoff, rec.scores


def bellman_solve(pomdp: PrincipalPomdp, cap: int = DEFAULT_TABLE_CAP) -> SolveResult:
    """Optimal deterministic full-memory policy of one POMDP.

    Ties, including every zero-probability history, go to the earliest action
    in declared order.
    """
    policy, payoff, scores = _weighted_solve([pomdp], np.ones(1), False, cap)
    return SolveResult(policy, payoff, np.ones(1), scores)


def pareto_solve(
    problems: ProblemSet,
    weights: Sequence[float],
    cap: int = DEFAULT_TABLE_CAP,
    refine: bool = False,
) -> SolveResult:
    """Pareto-optimal policy for the given principal weights.

    At each history the chosen action maximizes
    ``sum_j w_j * G_j(h, a)`` where ``G_j`` is principal ``j``'s unnormalized
    continuation value.  With ``refine`` set, ties in that objective are first
    broken by the unweighted sum of the ``G_j`` before falling back on label
    order.
    """
    w = weight_vector(weights, problems.k)
    policy, payoff, scores = _weighted_solve(problems.principals, w, refine, cap)
    return SolveResult(policy, payoff, w, scores)


def frontier_sweep(
    problems: ProblemSet, grid_size: int, cap: int = DEFAULT_TABLE_CAP
) -> list[FrontierPoint]:
    """Pareto frontier sampled on a uniform grid of first-principal weights."""
    if problems.k != 2:
        raise ValueError(f"frontier sweeps need exactly 2 principals, got {problems.k}")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    points: list[FrontierPoint] = []
    for w1 in np.linspace(0.0, 1.0, grid_size):
        w = np.array([w1, 1.0 - w1])
        res = pareto_solve(problems, w, cap=cap, refine=True)
        if any(np.max(np.abs(p.payoff - res.payoff)) < DEDUP_TOL for p in points):
            continue
        points.append(FrontierPoint(w, res.payoff, res.policy))
    return [p for p in points if not any(dominates(q.payoff, p.payoff) for q in points)]


def dominates(a: np.ndarray, b: np.ndarray, tol: float = DOMINANCE_TOL) -> bool:
    """Whether ``a`` is at least ``b`` everywhere and better somewhere."""
    return bool(np.all(a >= b - tol) and np.any(a > b + tol))


def naive_solve(
    problems: ProblemSet,
    r: float,
    selection: str | Mapping[str, str] = "first",
    cap: int = DEFAULT_TABLE_CAP,
) -> SolveResult:
    """Fixed-weight baseline: maximize ``r E1[U1|h] + (1-r) E2[U2|h]`` at every history.

    Each conditional expectation is taken in its principal's own model; a
    principal that finds the history impossible contributes 0.  ``selection``
    is ``"first"`` (earliest tied action) or a mapping from history keys such
    as ``"red"`` to the action label to use there, which must be among the
    maximizers.
    """
    if problems.k != 2:
        raise ValueError("the fixed-weight baseline is defined for two principals")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if selection != "first" and not isinstance(selection, Mapping):
        raise ValueError(f"unknown selection rule {selection!r}")
    overrides = {} if selection == "first" else dict(selection)
    mix = np.array([r, 1.0 - r])
    A, O = problems.actions, problems.observations
    first = problems.principals[0]
    check_size(first.n_observations, first.n_actions, first.horizon, cap)
    rec = _Recorder(first.horizon, first.n_actions)

    def decide(h, q, masses):
        cond = np.zeros_like(q)
        live = masses > 0
        cond[live] = q[live] / masses[live, None]
        score = mix @ cond
        choices = tied_maxima(score, NAIVE_TIE_TOL)
        key = history_key(h, A, O)
        action = int(choices[0])
        if key in overrides:
            action = A.index(overrides[key])
            if action not in choices:
                raise ValueError(f"override {overrides[key]!r} at {key!r} is not a maximizer")
        return rec.record(h, action, score)

    payoff = backward_pass(problems.principals, decide)
    return SolveResult(rec.policy(A, O, first.horizon), payoff, mix, rec.scores)
