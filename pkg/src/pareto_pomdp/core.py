"""POMDP data model, histories, policies and the exact probability kernels.

Everything is indexed by position in the declared label lists; labels only
matter at the file boundary (see :mod:`pareto_pomdp.problem_io`).

A principal's utility sees the whole state sequence ``(s_1, ..., s_{n+1})``
and, for the additive encoding, the actions taken between states.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

PROB_TOL = 1e-9
DEFAULT_TABLE_CAP = 10**6
_FORBIDDEN_LABEL_CHARS = (",", "|")


class SizeCapError(ValueError):
    """Raised when a policy table would exceed the configured size cap."""


class IncompatibleError(ValueError):
    """Raised when a policy or POMDP does not match another's shape."""


# --------------------------------------------------------------------------
# utilities


@dataclass(frozen=True, eq=False)
class AdditiveUtility:
    """Sum of per-step rewards ``step[s, a, s_next]`` plus ``terminal[s_{n+1}]``."""

    step: np.ndarray
    terminal: np.ndarray

    def value(self, states: Sequence[int], actions: Sequence[int]) -> float:
        total = float(self.terminal[states[-1]])
        for i, a in enumerate(actions):
            total += float(self.step[states[i], a, states[i + 1]])
        return total


@dataclass(frozen=True, eq=False)
class TableUtility:
    """Explicit utility of full state sequences; unlisted sequences get ``default``."""

    entries: Mapping[tuple[int, ...], float]
    default: float = 0.0

    def value(self, states: Sequence[int], actions: Sequence[int] = ()) -> float:
        return float(self.entries.get(tuple(states), self.default))


UtilitySpec = AdditiveUtility | TableUtility


# --------------------------------------------------------------------------
# POMDP


@dataclass(frozen=True, eq=False)
class PrincipalPomdp:
    """One principal's finite-horizon POMDP.

    Arrays: ``prior[s]``, ``transition[s, a, s_next]`` and
    ``observation[s, o]``.  Construction does not validate; call
    :func:`validate` (the file loader does so automatically).
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    horizon: int
    prior: np.ndarray
    transition: np.ndarray
    observation: np.ndarray
    utility: UtilitySpec
    name: str = ""

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class ProblemSet:
    """A collection of compatible principal POMDPs."""

    principals: tuple[PrincipalPomdp, ...]

    def __post_init__(self):
        if not self.principals:
            raise ValueError("a problem set needs at least one principal")
        problems = compatibility_violations(self.principals)
        if problems:
            raise IncompatibleError("; ".join(problems))

    @property
    def k(self) -> int:
        return len(self.principals)

    @property
    def actions(self) -> tuple[str, ...]:
        return self.principals[0].actions

    @property
    def observations(self) -> tuple[str, ...]:
        return self.principals[0].observations

    @property
    def horizon(self) -> int:
        return self.principals[0].horizon

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name or f"principal{j + 1}" for j, p in enumerate(self.principals))


def compatibility_violations(pomdps: Sequence[PrincipalPomdp]) -> list[str]:
    first = pomdps[0]
    out = []
    for j, p in enumerate(pomdps[1:], start=2):
        if p.actions != first.actions:
            out.append(f"principal {j} has actions {list(p.actions)} != {list(first.actions)}")
        if p.observations != first.observations:
            out.append(
                f"principal {j} has observations {list(p.observations)} != {list(first.observations)}"
            )
        if p.horizon != first.horizon:
            out.append(f"principal {j} has horizon {p.horizon} != {first.horizon}")
    return out


def weight_vector(values: Sequence[float], k: int | None = None) -> np.ndarray:
    """Validate and return a principal weight vector as a float array."""
    w = np.asarray(values, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-d vector")
    if k is not None and w.size != k:
        raise ValueError(f"expected {k} weights, got {w.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError(f"weights must be finite and nonnegative: {w.tolist()}")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights sum to {w.sum():.15g}, expected 1")
    return w


# --------------------------------------------------------------------------
# validation


def _check_rows(name: str, rows: np.ndarray, row_names: Sequence[str]) -> list[str]:
    out = []
    for row, label in zip(rows, row_names):
        if np.any(row < 0):
            out.append(f"{name} row {label} has negative probability {row.min():g}")
        total = row.sum()
        if not math.isfinite(total) or abs(total - 1.0) > PROB_TOL:
            out.append(f"{name} row {label} sums to {total:.10g}")
    return out


def validate(pomdp: PrincipalPomdp) -> list[str]:
    """Return the list of invariant violations; empty means valid."""
    out: list[str] = []
    for kind, labels in (
        ("state", pomdp.states),
        ("action", pomdp.actions),
        ("observation", pomdp.observations),
    ):
        if not labels:
            out.append(f"no {kind} labels")
        if len(set(labels)) != len(labels):
            out.append(f"duplicate {kind} labels")
        for label in labels:
            if not isinstance(label, str) or any(c in label for c in _FORBIDDEN_LABEL_CHARS):
                out.append(f"{kind} label {label!r} must be a string without ',' or '|'")
    if not isinstance(pomdp.horizon, (int, np.integer)) or pomdp.horizon < 1:
        out.append(f"horizon must be a positive integer, got {pomdp.horizon!r}")
        return out

    S, A, O = pomdp.n_states, pomdp.n_actions, pomdp.n_observations
    prior = np.asarray(pomdp.prior, dtype=float)
    trans = np.asarray(pomdp.transition, dtype=float)
    obs = np.asarray(pomdp.observation, dtype=float)
    if prior.shape != (S,):
        out.append(f"prior has shape {prior.shape}, expected {(S,)}")
    else:
        if np.any(prior < 0):
            out.append(f"prior has negative probability {prior.min():g}")
        if abs(prior.sum() - 1.0) > PROB_TOL:
            out.append(f"prior sums to {prior.sum():.10g}")
    if trans.shape != (S, A, S):
        out.append(f"transition has shape {trans.shape}, expected {(S, A, S)}")
    else:
        names = [f"({s}|{a})" for s in pomdp.states for a in pomdp.actions]
        out.extend(_check_rows("transition", trans.reshape(S * A, S), names))
    if obs.shape != (S, O):
        out.append(f"observation has shape {obs.shape}, expected {(S, O)}")
    else:
        out.extend(_check_rows("observation", obs, pomdp.states))
    out.extend(_utility_violations(pomdp))
    return out


def _utility_violations(pomdp: PrincipalPomdp) -> list[str]:
    u = pomdp.utility
    S, A, n = pomdp.n_states, pomdp.n_actions, pomdp.horizon
    out = []
    if isinstance(u, AdditiveUtility):
        step, term = np.asarray(u.step, float), np.asarray(u.terminal, float)
        if step.shape != (S, A, S):
            out.append(f"utility step table has shape {step.shape}, expected {(S, A, S)}")
        elif not np.all(np.isfinite(step)):
            out.append("utility step table has non-finite values")
        if term.shape != (S,):
            out.append(f"utility terminal table has shape {term.shape}, expected {(S,)}")
        elif not np.all(np.isfinite(term)):
            out.append("utility terminal table has non-finite values")
    elif isinstance(u, TableUtility):
        if not math.isfinite(u.default):
            out.append("utility default is not finite")
        for seq, value in u.entries.items():
            if len(seq) != n + 1:
                out.append(f"utility sequence {seq} has length {len(seq)}, expected {n + 1}")
            elif any(not (0 <= s < S) for s in seq):
                out.append(f"utility sequence {seq} references an unknown state")
            if not math.isfinite(value):
                out.append(f"utility of sequence {seq} is not finite")
    else:
        out.append(f"unknown utility type {type(u).__name__}")
    return out


# --------------------------------------------------------------------------
# histories and policies


class History(NamedTuple):
    """``(o_1..o_i, a_1..a_{i-1})`` as index tuples."""

    observations: tuple[int, ...]
    actions: tuple[int, ...]

    @property
    def step(self) -> int:
        return len(self.observations)

    def extend(self, action: int, observation: int) -> "History":
        return History(self.observations + (observation,), self.actions + (action,))


def history_count(n_observations: int, n_actions: int, step: int) -> int:
    return n_observations**step * n_actions ** (step - 1)


def iter_histories(n_observations: int, n_actions: int, step: int) -> Iterator[History]:
    """All histories of a given length, in lexicographic order of ``o1,a1,o2,...``."""
    if step < 1:
        raise ValueError("history length must be >= 1")
    for o1 in range(n_observations):
        yield from _extend_histories(History((o1,), ()), n_observations, n_actions, step)


def _extend_histories(h: History, n_obs: int, n_act: int, step: int) -> Iterator[History]:
    if h.step == step:
        yield h
        return
    for a in range(n_act):
        for o in range(n_obs):
            yield from _extend_histories(h.extend(a, o), n_obs, n_act, step)


def check_size(n_observations: int, n_actions: int, horizon: int, cap: int = DEFAULT_TABLE_CAP):
    size = n_observations**horizon * n_actions ** (horizon - 1)
    if size > cap:
        raise SizeCapError(
            f"policy table at step {horizon} needs {size} histories, above the cap of {cap}"
        )


@dataclass(frozen=True, eq=False)
class FullMemoryPolicy:
    """Per-step tables mapping every history of that length to an action distribution."""

    actions: tuple[str, ...]
    observations: tuple[str, ...]
    horizon: int
    tables: tuple[dict[History, np.ndarray], ...]

    def distribution(self, history: History) -> np.ndarray:
        return self.tables[history.step - 1][history]

    def prob(self, history: History, action: int) -> float:
        return float(self.tables[history.step - 1][history][action])

    @classmethod
    def from_function(
        cls,
        actions: Sequence[str],
        observations: Sequence[str],
        horizon: int,
        rule: Callable[[History], np.ndarray | int],
        cap: int = DEFAULT_TABLE_CAP,
    ) -> "FullMemoryPolicy":
        """Tabulate ``rule``; an integer return is read as a pure action."""
        check_size(len(observations), len(actions), horizon, cap)
        A = len(actions)
        tables = []
        for i in range(1, horizon + 1):
            table = {}
            for h in iter_histories(len(observations), A, i):
                d = rule(h)
                if isinstance(d, (int, np.integer)):
                    d = one_hot(int(d), A)
                table[h] = np.asarray(d, dtype=float)
            tables.append(table)
        return cls(tuple(actions), tuple(observations), horizon, tuple(tables))

    @classmethod
    def constant(cls, actions, observations, horizon, action: int) -> "FullMemoryPolicy":
        return cls.from_function(actions, observations, horizon, lambda h: action)


def one_hot(index: int, size: int) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def policy_violations(policy: FullMemoryPolicy) -> list[str]:
    out = []
    A, O = len(policy.actions), len(policy.observations)
    if len(policy.tables) != policy.horizon:
        return [f"policy has {len(policy.tables)} step tables for horizon {policy.horizon}"]
    for i, table in enumerate(policy.tables, start=1):
        expected = history_count(O, A, i)
        if len(table) != expected:
            out.append(f"step {i} table has {len(table)} histories, expected {expected}")
        for h, d in table.items():
            if h.step != i or len(h.actions) != i - 1:
                out.append(f"step {i} table holds malformed history {h}")
                continue
            if d.shape != (A,):
                out.append(f"distribution at {h} has shape {d.shape}")
            elif np.any(d < 0) or abs(d.sum() - 1.0) > PROB_TOL:
                out.append(f"distribution at {h} is not a probability vector")
    return out


def check_compatible(pomdp: PrincipalPomdp, policy: FullMemoryPolicy):
    if (
        policy.actions != pomdp.actions
        or policy.observations != pomdp.observations
        or policy.horizon != pomdp.horizon
    ):
        raise IncompatibleError("policy actions/observations/horizon do not match the POMDP")


@dataclass(frozen=True, eq=False)
class MixedPolicy:
    """Pick component ``r`` with probability ``coefficients[r]`` at time 0, then follow it."""

    coefficients: tuple[float, ...]
    policies: tuple[FullMemoryPolicy, ...]

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if len(c) != len(self.policies) or len(c) == 0:
            raise ValueError("need one coefficient per component policy")
        if np.any(c < 0) or abs(c.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"mixing coefficients {c.tolist()} are not a probability vector")


@dataclass(frozen=True)
class Outcome:
    states: tuple[int, ...]
    observations: tuple[int, ...]
    actions: tuple[int, ...]


# --------------------------------------------------------------------------
# kernels


def joint_probability(pomdp: PrincipalPomdp, outcome: Outcome, policy: FullMemoryPolicy) -> float:
    """Probability of a full outcome under ``pomdp`` when ``policy`` is followed."""
    n = pomdp.horizon
    s, o, a = outcome.states, outcome.observations, outcome.actions
    if len(s) != n + 1 or len(o) != n or len(a) != n:
        raise IncompatibleError(
            f"outcome lengths {(len(s), len(o), len(a))} do not fit horizon {n}"
        )
    check_compatible(pomdp, policy)
    p = float(pomdp.prior[s[0]])
    for i in range(n):
        h = History(tuple(o[: i + 1]), tuple(a[:i]))
        p *= pomdp.observation[s[i], o[i]] * policy.prob(h, a[i]) * pomdp.transition[s[i], a[i], s[i + 1]]
    return float(p)


def causal_obs_probability(
    pomdp: PrincipalPomdp, observations: Sequence[int], actions: Sequence[int]
) -> float:
    """``P(o_1..o_m | Do(a_1..a_l))`` with ``l`` equal to ``m`` or ``m - 1``."""
    m, l = len(observations), len(actions)
    if l not in (m, m - 1):
        raise IncompatibleError(f"{m} observations cannot follow {l} actions")
    if m > pomdp.horizon or l > pomdp.horizon:
        raise IncompatibleError("sequence longer than the horizon")
    for o in observations:
        if not 0 <= o < pomdp.n_observations:
            raise IndexError(f"invalid observation index {o}")
    for a in actions:
        if not 0 <= a < pomdp.n_actions:
            raise IndexError(f"invalid action index {a}")
    if m == 0:
        return 1.0
    belief = pomdp.prior * pomdp.observation[:, observations[0]]
    for i in range(1, m):
        belief = (belief @ pomdp.transition[:, actions[i - 1], :]) * pomdp.observation[:, observations[i]]
    # a trailing action only multiplies by a stochastic row
    return float(belief.sum())


def utility_tensors(pomdp: PrincipalPomdp) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(state_utility, step_reward)``.

    ``state_utility`` has one axis per state ``s_1..s_{n+1}``; ``step_reward`` is
    ``[s, a, s_next]`` and is zero for table utilities.
    """
    S, A, n = pomdp.n_states, pomdp.n_actions, pomdp.horizon
    u = pomdp.utility
    shape = (S,) * (n + 1)
    if isinstance(u, AdditiveUtility):
        state_u = np.broadcast_to(np.asarray(u.terminal, float), shape).copy()
        return state_u, np.asarray(u.step, dtype=float)
    state_u = np.full(shape, float(u.default))
    for seq, value in u.entries.items():
        state_u[tuple(seq)] = value
    return state_u, np.zeros((S, A, S))


@dataclass(frozen=True, eq=False)
class _Model:
    pomdp: PrincipalPomdp
    state_utility: np.ndarray
    step_reward: np.ndarray
    has_steps: bool

    @classmethod
    def of(cls, pomdp: PrincipalPomdp) -> "_Model":
        state_u, step = utility_tensors(pomdp)
        return cls(pomdp, state_u, step, bool(np.any(step)))


# decide(history, Q, masses) -> action distribution at history, where Q[j, a] is
# the unnormalized continuation value of action a in model j and masses[j] is
# P_j(o_<=i | Do(a_<i)).
DecideFn = Callable[[History, np.ndarray, np.ndarray], np.ndarray]


def prefix_weights(pomdp: PrincipalPomdp, history: History) -> np.ndarray:
    """Weights over state prefixes ``(s_1..s_i)`` consistent with ``history``.

    Entry ``[s_1..s_i]`` is ``P(s_1) prod P(o_t|s_t) prod P(s_{t+1}|s_t a_t)``;
    past action probabilities are not included (causal conditioning).
    """
    return _prefix(_Model.of(pomdp), history)[0]


def _prefix(model: _Model, history: History) -> tuple[np.ndarray, np.ndarray | None]:
    """Prefix weights, and the same weighted by step rewards earned so far."""
    pomdp = model.pomdp
    w = pomdp.prior * pomdp.observation[:, history.observations[0]]
    r = np.zeros_like(w) if model.has_steps else None
    for a, o in zip(history.actions, history.observations[1:]):
        moved = w[..., None] * pomdp.transition[:, a, :]
        if r is not None:
            r = (r[..., None] * pomdp.transition[:, a, :] + moved * model.step_reward[:, a, :]) * pomdp.observation[:, o]
        w = moved * pomdp.observation[:, o]
    return w, r


def _q_values(models: Sequence[_Model], history: History, prefixes: list, decide: DecideFn) -> np.ndarray:
    # prefixes[j] = (weights, reward-weighted weights or None) over s_1..s_i
    first = models[0].pomdp
    n, A, O = first.horizon, first.n_actions, first.n_observations
    i = history.step
    q = np.zeros((len(models), A))
    for a in range(A):
        moved = []
        for j, m in enumerate(models):
            w, r = prefixes[j]
            mv = w[..., None] * m.pomdp.transition[:, a, :]
            rv = None
            if r is not None:
                rv = r[..., None] * m.pomdp.transition[:, a, :] + mv * m.step_reward[:, a, :]
            if i == n:
                q[j, a] = (mv * m.state_utility).sum() + (rv.sum() if rv is not None else 0.0)
            moved.append((mv, rv))
        if i < n:
            for o in range(O):
                child = history.extend(a, o)
                child_prefixes = [
                    (mv * m.pomdp.observation[:, o], None if rv is None else rv * m.pomdp.observation[:, o])
                    for (mv, rv), m in zip(moved, models)
                ]
                q_child = _q_values(models, child, child_prefixes, decide)
                masses = np.array([w.sum() for w, _ in child_prefixes])
                q[:, a] += q_child @ decide(child, q_child, masses)
    return q


def backward_pass(pomdps: Sequence[PrincipalPomdp], decide: DecideFn) -> np.ndarray:
    """Walk the history tree of compatible POMDPs, deciding every history.

    Every history is decided after all of its descendants, so ``decide`` sees
    continuation values that already account for the future choices it made.
    Returns each model's expected utility of the decided policy.
    """
    models = [_Model.of(p) for p in pomdps]
    first = pomdps[0]
    total = np.zeros(len(models))
    for o in range(first.n_observations):
        h = History((o,), ())
        prefixes = [_prefix(m, h) for m in models]
        q = _q_values(models, h, prefixes, decide)
        masses = np.array([w.sum() for w, _ in prefixes])
        total += q @ decide(h, q, masses)
    return total


def _follow(policy: FullMemoryPolicy) -> DecideFn:
    return lambda h, q, masses: policy.distribution(h)


def evaluate(pomdp: PrincipalPomdp, policy: FullMemoryPolicy | MixedPolicy) -> float:
    """Exact expected utility of ``policy`` in ``pomdp``."""
    if isinstance(policy, MixedPolicy):
        return float(sum(c * evaluate(pomdp, p) for c, p in zip(policy.coefficients, policy.policies)))
    check_compatible(pomdp, policy)
    return float(backward_pass([pomdp], _follow(policy))[0])


def evaluate_all(problems: ProblemSet, policy: FullMemoryPolicy | MixedPolicy) -> np.ndarray:
    """Payoff vector: each principal's subjective expected utility."""
    return np.array([evaluate(p, policy) for p in problems.principals])


def action_values(pomdp: PrincipalPomdp, history: History, future_policy: FullMemoryPolicy) -> np.ndarray:
    """Unnormalized continuation value of each pure action at ``history``."""
    check_compatible(pomdp, future_policy)
    if not 1 <= history.step <= pomdp.horizon or len(history.actions) != history.step - 1:
        raise IncompatibleError(f"history {history} does not fit horizon {pomdp.horizon}")
    model = _Model.of(pomdp)
    return _q_values([model], history, [_prefix(model, history)], _follow(future_policy))[0]


def continuation_value_unnormalized(
    pomdp: PrincipalPomdp,
    history: History,
    action_dist: Sequence[float],
    future_policy: FullMemoryPolicy,
) -> float:
    """``P(o_<=i | Do(a_<i))`` times the expected utility of playing ``action_dist`` at ``history``.

    Never divides by the history probability, so an impossible history has
    value 0 for every action distribution.
    """
    alpha = np.asarray(action_dist, dtype=float)
    if alpha.shape != (pomdp.n_actions,):
        raise IncompatibleError(f"action distribution has shape {alpha.shape}")
    return float(action_values(pomdp, history, future_policy) @ alpha)


def iter_outcomes(pomdp: PrincipalPomdp) -> Iterator[Outcome]:
    """Every ``(states, observations, actions)`` triple, without pruning."""
    n = pomdp.horizon
    for s in itertools.product(range(pomdp.n_states), repeat=n + 1):
        for o in itertools.product(range(pomdp.n_observations), repeat=n):
            for a in itertools.product(range(pomdp.n_actions), repeat=n):
                yield Outcome(s, o, a)
