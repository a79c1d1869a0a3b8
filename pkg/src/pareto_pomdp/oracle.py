"""Brute-force witnesses for the solver.

Nothing here calls the history-tree recursion in :mod:`pareto_pomdp.core`;
expectations are recomputed from the raw tables by looping over outcomes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .core import (
    FullMemoryPolicy,
    History,
    PrincipalPomdp,
    ProblemSet,
    one_hot,
)

DEFAULT_ENUM_CAP = 10**7
VERIFY_TOL = 1e-9
HULL_TOL = 1e-7


class EnumerationCapError(ValueError):
    """Raised when the deterministic policy space is too large to enumerate."""


# --------------------------------------------------------------------------
# naive evaluation


def naive_joint_probability(pomdp: PrincipalPomdp, states, observations, actions, policy) -> float:
    p = pomdp.prior[states[0]]
    for i in range(pomdp.horizon):
        h = History(tuple(observations[: i + 1]), tuple(actions[:i]))
        p = p * pomdp.observation[states[i], observations[i]]
        p = p * policy.tables[i][h][actions[i]]
        p = p * pomdp.transition[states[i], actions[i], states[i + 1]]
    return float(p)


def naive_evaluate(pomdp: PrincipalPomdp, policy: FullMemoryPolicy) -> float:
    """Expected utility by summing over every (states, observations, actions) triple."""
    n = pomdp.horizon
    total = 0.0
    for s in itertools.product(range(pomdp.n_states), repeat=n + 1):
        for o in itertools.product(range(pomdp.n_observations), repeat=n):
            for a in itertools.product(range(pomdp.n_actions), repeat=n):
                p = naive_joint_probability(pomdp, s, o, a, policy)
                if p:
                    total += p * pomdp.utility.value(s, a)
    return total


def naive_causal_probability(pomdp: PrincipalPomdp, observations, actions) -> float:
    """``P(o | Do(a))`` by summing over all state sequences of matching length."""
    m = len(observations)
    total = 0.0
    for s in itertools.product(range(pomdp.n_states), repeat=m):
        p = pomdp.prior[s[0]] * pomdp.observation[s[0], observations[0]]
        for i in range(1, m):
            p *= pomdp.transition[s[i - 1], actions[i - 1], s[i]] * pomdp.observation[s[i], observations[i]]
        total += p
    return float(total)


def sequence_values(pomdp: PrincipalPomdp) -> dict[tuple, float]:
    """``(obs_seq, act_seq) -> sum_s P(s, o | Do(a)) U(s, a)`` over full sequences."""
    n = pomdp.horizon
    table = {}
    for o in itertools.product(range(pomdp.n_observations), repeat=n):
        for a in itertools.product(range(pomdp.n_actions), repeat=n):
            total = 0.0
            for s in itertools.product(range(pomdp.n_states), repeat=n + 1):
                p = pomdp.prior[s[0]]
                for i in range(n):
                    p *= pomdp.observation[s[i], o[i]] * pomdp.transition[s[i], a[i], s[i + 1]]
                if p:
                    total += p * pomdp.utility.value(s, a)
            table[o, a] = total
    return table


# --------------------------------------------------------------------------
# policy enumeration


def _all_histories(n_obs: int, n_act: int, horizon: int) -> list[History]:
    out = []
    for i in range(1, horizon + 1):
        for o in itertools.product(range(n_obs), repeat=i):
            for a in itertools.product(range(n_act), repeat=i - 1):
                out.append(History(o, a))
    return out


class PolicyEnumeration:
    """Every deterministic full-memory policy for a given shape.

    Iterating yields choice tuples, one action index per history in
    :attr:`histories` order; :meth:`to_policy` expands one into tables.
    """

    def __init__(self, actions: Sequence[str], observations: Sequence[str], horizon: int, cap: int = DEFAULT_ENUM_CAP):
        self.actions = tuple(actions)
        self.observations = tuple(observations)
        self.horizon = horizon
        A, O = len(actions), len(observations)
        exponent = sum(O**i * A ** (i - 1) for i in range(1, horizon + 1))
        # compare in log space first; the count can be astronomically large
        if exponent * math.log(max(A, 1)) > math.log(cap) + 1e-9:
            raise EnumerationCapError(f"{A}**{exponent} deterministic policies exceed the cap of {cap}")
        self.count = A**exponent
        if self.count > cap:
            raise EnumerationCapError(f"{self.count} deterministic policies exceed the cap of {cap}")
        self.histories = _all_histories(O, A, horizon)
        self.index = {h: i for i, h in enumerate(self.histories)}

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(range(len(self.actions)), repeat=len(self.histories))

    def to_policy(self, choice: Sequence[int]) -> FullMemoryPolicy:
        A = len(self.actions)
        tables: list[dict] = [{} for _ in range(self.horizon)]
        for h, a in zip(self.histories, choice):
            tables[h.step - 1][h] = one_hot(a, A)
        return FullMemoryPolicy(self.actions, self.observations, self.horizon, tuple(tables))

    def actions_along(self, choice: Sequence[int], observations: Sequence[int]) -> tuple[int, ...]:
        acts: list[int] = []
        for i in range(len(observations)):
            acts.append(choice[self.index[History(tuple(observations[: i + 1]), tuple(acts))]])
        return tuple(acts)


def _choice_block(enum: PolicyEnumeration, start: int, stop: int) -> np.ndarray:
    """Rows ``start..stop`` of the enumeration as a choice matrix (last history fastest)."""
    A, H = len(enum.actions), len(enum.histories)
    idx = np.arange(start, stop, dtype=np.int64)
    radix = A ** np.arange(H - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // radix[None, :]) % A


def brute_force_payoffs(
    problems: ProblemSet, cap: int = DEFAULT_ENUM_CAP, block: int = 1 << 16
) -> np.ndarray:
    """Payoff vector of every deterministic policy, in enumeration order.

    Policies are processed in blocks: for each observation sequence the
    action path of every policy in the block is read off its choice row and
    the matching entry of the sequence-value table is added.
    """
    enum = PolicyEnumeration(problems.actions, problems.observations, problems.horizon, cap)
    A, O, n = len(enum.actions), len(enum.observations), enum.horizon
    tables = [sequence_values(p) for p in problems.principals]
    obs_seqs = list(itertools.product(range(O), repeat=n))
    act_seqs = list(itertools.product(range(A), repeat=n))
    # value[j][o] is indexed by the action sequence encoded in base A
    value = [{o: np.array([t[o, a] for a in act_seqs]) for o in obs_seqs} for t in tables]
    # lookup[o prefix] maps the base-A code of the past actions to a history index
    lookup = {}
    for i in range(1, n + 1):
        for o in itertools.product(range(O), repeat=i):
            lookup[o] = np.array(
                [enum.index[History(o, a)] for a in itertools.product(range(A), repeat=i - 1)], dtype=np.int64
            )
    out = np.zeros((enum.count, len(tables)))
    for start in range(0, enum.count, block):
        stop = min(start + block, enum.count)
        choice = _choice_block(enum, start, stop)
        rows = np.arange(stop - start)
        for o in obs_seqs:
            code = np.zeros(stop - start, dtype=np.int64)
            for i in range(n):
                act = choice[rows, lookup[o[: i + 1]][code]]
                code = code * A + act
            for j in range(len(tables)):
                out[start:stop, j] += value[j][o][code]
    return out


# --------------------------------------------------------------------------
# hull geometry


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _prefilter(pts: np.ndarray) -> np.ndarray:
    """Drop points that cannot be hull vertices, vectorized.

    Only the lowest and highest point of each x column can be a vertex, and
    nothing strictly inside the polygon spanned by the eight axis and
    diagonal extremes can be one either.
    """
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    change = pts[1:, 0] != pts[:-1, 0]
    pts = pts[np.r_[True, change] | np.r_[change, True]]
    if len(pts) < 64:
        return pts
    x, y = pts[:, 0], pts[:, 1]
    picks = [f(v) for v in (x, y, x + y, x - y) for f in (np.argmin, np.argmax)]
    inner = _monotone_chain(sorted(set(map(tuple, pts[picks]))))
    if len(inner) < 3:
        return pts
    scale = float(np.abs(pts).max()) or 1.0
    inside = np.ones(len(pts), dtype=bool)
    for a, b in zip(inner, np.roll(inner, -1, axis=0)):
        inside &= (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) > 1e-9 * scale * scale
    return pts[~inside]


def _monotone_chain(pts: list) -> np.ndarray:
    if len(pts) <= 2:
        return np.array(pts)
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Counter-clockwise hull vertices by Andrew's monotone chain."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return pts
    return _monotone_chain(sorted(set(map(tuple, _prefilter(pts)))))


def _edges(hull: np.ndarray):
    m = len(hull)
    if m == 1:
        return [(hull[0], hull[0])]
    if m == 2:
        return [(hull[0], hull[1])]
    return [(hull[i], hull[(i + 1) % m]) for i in range(m)]


def _segment_hits(p: np.ndarray, q: np.ndarray, axis: int, value: float) -> list[np.ndarray]:
    d = q[axis] - p[axis]
    if d == 0:
        return []
    t = (value - p[axis]) / d
    if 0.0 <= t <= 1.0:
        return [p + t * (q - p)]
    return []


def _diagonal_hits(p: np.ndarray, q: np.ndarray, target: np.ndarray) -> list[np.ndarray]:
    # points on the segment where x - tx == y - ty
    f = lambda z: (z[0] - target[0]) - (z[1] - target[1])  # noqa: E731
    fp, fq = f(p), f(q)
    if fp == fq:
        return []
    t = fp / (fp - fq)
    if 0.0 <= t <= 1.0:
        return [p + t * (q - p)]
    return []


def _inside(hull: np.ndarray, x: np.ndarray, tol: float) -> bool:
    return _distance_2d(hull, x) <= tol


def _distance_2d(hull: np.ndarray, x: np.ndarray) -> float:
    """Euclidean distance from ``x`` to the hull (0 inside)."""
    if len(hull) >= 3:
        inside = True
        for p, q in _edges(hull):
            if (q[0] - p[0]) * (x[1] - p[1]) - (q[1] - p[1]) * (x[0] - p[0]) < 0:
                inside = False
                break
        if inside:
            return 0.0
    best = math.inf
    for p, q in _edges(hull):
        d = q - p
        denom = float(d @ d)
        t = 0.0 if denom == 0 else min(1.0, max(0.0, float((x - p) @ d) / denom))
        best = min(best, float(np.linalg.norm(x - (p + t * d))))
    return best


def distance_to_hull(points: np.ndarray, x: Sequence[float]) -> float:
    """Distance from a 2-d payoff ``x`` to the convex hull of ``points``."""
    return _distance_2d(convex_hull_2d(points), np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class ParetoVerdict:
    optimal: bool
    achievable: bool
    witness: np.ndarray | None = None
    gain: float = 0.0


def _dominating_point_2d(hull: np.ndarray, c: np.ndarray, tol: float):
    """Hull point ``p >= c`` with some ``p_j > c_j + tol`` and the largest total gain.

    The region hull-and-quadrant is a convex polygon; its vertices are hull
    vertices, edge crossings of the quadrant boundary, and the corner ``c``.
    """
    candidates = [v for v in hull]
    for p, q in _edges(hull):
        candidates += _segment_hits(p, q, 0, c[0]) + _segment_hits(p, q, 1, c[1])
    candidates.append(c)
    best, best_sum = None, -math.inf
    for z in candidates:
        z = np.maximum(z, c) if np.all(z >= c - 1e-12) else z
        if np.all(z >= c) and np.max(z - c) > tol and _inside(hull, z, 1e-9):
            if (z - c).sum() > best_sum:
                best, best_sum = z, float((z - c).sum())
    return best


def _dominating_point_lp(points: np.ndarray, c: np.ndarray, tol: float):
    from scipy.optimize import linprog

    m, k = points.shape
    # maximize total gain over mixtures with p >= c
    res = linprog(
        -points.sum(axis=1),
        A_ub=-points.T,
        b_ub=-c,
        A_eq=np.ones((1, m)),
        b_eq=[1.0],
        bounds=[(0, None)] * m,
        method="highs",
    )
    if not res.success:
        return None
    z = res.x @ points
    return z if np.max(z - c) > tol else None


def verify_pareto(
    problems: ProblemSet,
    candidate: Sequence[float],
    cap: int = DEFAULT_ENUM_CAP,
    tol: float = VERIFY_TOL,
    points: np.ndarray | None = None,
) -> ParetoVerdict:
    """Check that no mixture of deterministic policies dominates ``candidate``.

    ``achievable`` reports whether the candidate itself lies within
    ``HULL_TOL`` of the achievable region.
    """
    c = np.asarray(candidate, dtype=float)
    if points is None:
        points = brute_force_payoffs(problems, cap)
    if problems.k == 2:
        hull = convex_hull_2d(points)
        witness = _dominating_point_2d(hull, c, tol)
        achievable = _distance_2d(hull, c) < HULL_TOL
    else:
        witness = _dominating_point_lp(points, c, tol)
        achievable = _in_mixture_lp(points, c)
    if witness is not None:
        return ParetoVerdict(False, achievable, witness, float(np.max(witness - c)))
    return ParetoVerdict(True, achievable)


def _in_mixture_lp(points: np.ndarray, c: np.ndarray) -> bool:
    from scipy.optimize import linprog

    m, k = points.shape
    res = linprog(
        np.zeros(m),
        A_ub=np.vstack([points.T, -points.T]),
        b_ub=np.concatenate([c + HULL_TOL, -(c - HULL_TOL)]),
        A_eq=np.ones((1, m)),
        b_eq=[1.0],
        bounds=[(0, None)] * m,
        method="highs",
    )
    return bool(res.success)


def best_min_margin(points: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    """Hull point maximizing ``min_j (p_j - target_j)`` for 2-d payoffs."""
    hull = convex_hull_2d(points)
    candidates = list(hull)
    for p, q in _edges(hull):
        candidates += _diagonal_hits(p, q, target)
    best = max(candidates, key=lambda z: float(np.min(z - target)))
    return np.asarray(best), float(np.min(best - target))


# --------------------------------------------------------------------------
# fixed-weight impossibility check


@dataclass(frozen=True, eq=False)
class Prop1Case:
    r: float
    maximizers: tuple[tuple[str, ...], ...]
    payoffs: np.ndarray
    best_payoff: np.ndarray
    margin: float

    @property
    def reaches_target(self) -> bool:
        return self.margin >= -VERIFY_TOL


@dataclass(frozen=True, eq=False)
class Prop1Report:
    target: np.ndarray
    cases: list[Prop1Case] = field(default_factory=list)
    breakpoints: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True when no fixed weight reaches the target."""
        return not any(c.reaches_target for c in self.cases)


def conditional_action_values(pomdp: PrincipalPomdp, observation: int) -> np.ndarray:
    """``E[U | o_1, a_1 = a]`` for a one-step problem; zeros if ``o_1`` is impossible."""
    S, A = pomdp.n_states, pomdp.n_actions
    num = np.zeros(A)
    den = 0.0
    for s1 in range(S):
        p1 = pomdp.prior[s1] * pomdp.observation[s1, observation]
        den += p1
        for a in range(A):
            for s2 in range(S):
                num[a] += p1 * pomdp.transition[s1, a, s2] * pomdp.utility.value((s1, s2), (a,))
    return num / den if den > 0 else np.zeros(A)


def _r_grid(r_grid: int) -> list[float]:
    grid = set(np.linspace(0.0, 1.0, r_grid).tolist()) if r_grid >= 2 else set()
    grid |= {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0}
    return sorted(grid)


def prop1_verify(
    problems: ProblemSet, target: Sequence[float], r_grid: int = 1001, tol: float = VERIFY_TOL
) -> Prop1Report:
    """Check that no fixed-over-time weighting reaches ``target``.

    For each ``r`` the maximizer sets of ``r E1[U1|o] + (1-r) E2[U2|o]`` are
    found per observation; every pure selection from them is evaluated and
    the convex hull of those payoffs stands in for the mixed selections.
    """
    if problems.k != 2 or problems.horizon != 1:
        raise ValueError("the fixed-weight check needs two principals and horizon 1")
    target = np.asarray(target, dtype=float)
    O, A = len(problems.observations), len(problems.actions)
    cond = np.array(
        [[conditional_action_values(p, o) for o in range(O)] for p in problems.principals]
    )  # [principal, observation, action]
    tables = [sequence_values(p) for p in problems.principals]

    cases = []
    for r in _r_grid(r_grid):
        score = r * cond[0] + (1.0 - r) * cond[1]
        sets = []
        for o in range(O):
            best = score[o].max()
            sets.append(tuple(a for a in range(A) if score[o, a] >= best - tol * max(1.0, abs(best))))
        payoffs = np.array(
            [[sum(t[(o,), (sel[o],)] for o in range(O)) for t in tables] for sel in itertools.product(*sets)]
        )
        best_payoff, margin = best_min_margin(payoffs, target)
        labels = tuple(tuple(problems.actions[a] for a in s) for s in sets)
        cases.append(Prop1Case(r, labels, payoffs, best_payoff, margin))
    return Prop1Report(target, cases, _breakpoints(cases))


def _breakpoints(cases: list[Prop1Case]) -> list[float]:
    """Weights where the maximizer sets change: exact ties, else midpoints."""
    out = []
    for i, c in enumerate(cases):
        if any(len(s) > 1 for s in c.maximizers):
            out.append(c.r)
        elif i and cases[i - 1].maximizers != c.maximizers and not any(
            len(s) > 1 for s in cases[i - 1].maximizers
        ):
            out.append(0.5 * (cases[i - 1].r + c.r))
    return out
