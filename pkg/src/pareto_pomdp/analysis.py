"""Effective principal weights along histories, and seeded trajectory sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    FullMemoryPolicy,
    History,
    PrincipalPomdp,
    ProblemSet,
    Outcome,
    causal_obs_probability,
    check_compatible,
    iter_histories,
    weight_vector,
)
from .mixture import MixturePomdp, PrincipalPosterior, build_mixture, posterior_from_likelihoods
from .problem_io import pomdp_hash


def effective_weights(problems: ProblemSet, weights: Sequence[float], history: History) -> PrincipalPosterior:
    """How much each principal's continuation value counts at ``history``.

    Proportional to ``w_j * P_j(o_<=i | Do(a_<i))``; uniform and flagged
    degenerate if no principal considers the history possible.
    """
    w = weight_vector(weights, problems.k)
    if history.step == 0:
        return PrincipalPosterior(w.copy(), False)
    likelihood = np.array(
        [causal_obs_probability(p, history.observations, history.actions) for p in problems.principals]
    )
    return posterior_from_likelihoods(w, likelihood)


def _policy_path_probability(policy: FullMemoryPolicy, history: History) -> float:
    p = 1.0
    for t, a in enumerate(history.actions, start=1):
        p *= policy.prob(History(history.observations[:t], history.actions[: t - 1]), a)
    return p


def history_probability(pomdp: PrincipalPomdp, policy: FullMemoryPolicy, history: History) -> float:
    """Probability of reaching ``history`` when ``policy`` runs in ``pomdp``."""
    return causal_obs_probability(pomdp, history.observations, history.actions) * _policy_path_probability(
        policy, history
    )


def expected_effective_weights(
    problems: ProblemSet,
    weights: Sequence[float],
    policy: FullMemoryPolicy,
    model: str | int = "mixture",
) -> np.ndarray:
    """Exact mean effective weights per step, rows ``0..n``.

    ``model`` is ``"mixture"`` or a 0-based principal index naming the world
    the histories are drawn from.  Under the mixture each row equals ``w``.
    """
    w = weight_vector(weights, problems.k)
    world = build_mixture(problems, w) if model == "mixture" else problems.principals[int(model)]
    check_compatible(world, policy)
    A, O, n = len(problems.actions), len(problems.observations), problems.horizon
    rows = [w.copy()]
    for i in range(1, n + 1):
        acc = np.zeros(problems.k)
        for h in iter_histories(O, A, i):
            p = history_probability(world, policy, h)
            if p:
                acc += p * effective_weights(problems, w, h).probabilities
        rows.append(acc)
    return np.array(rows)


# --------------------------------------------------------------------------
# sampling


def make_rng(seed: int, instance_hash: str) -> np.random.Generator:
    """PCG64 seeded with the first 64 bits of the instance hash XOR the user seed."""
    return np.random.Generator(np.random.PCG64(int(instance_hash[:16], 16) ^ int(seed)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    outcome: Outcome
    model_tag: int | None
    utility: float
    # rows 1..n: effective weights after each observation
    effective_weights: np.ndarray | None = None
    # U^j of the realized states read in principal j's state space; NaN
    # where a realized state label is not one of j's states
    utilities: np.ndarray | None = None


def _draw(rng: np.random.Generator, probs: np.ndarray) -> int:
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    if idx >= len(probs):
        # rounding pushed past the end; take the last supported entry
        idx = int(np.flatnonzero(probs)[-1])
    return idx


def _state_labels(pomdp: PrincipalPomdp, problems: ProblemSet, states: Sequence[int]) -> list[str]:
    if isinstance(pomdp, MixturePomdp):
        return [problems.principals[pomdp.tags[s]].states[pomdp.base_states[s]] for s in states]
    return [pomdp.states[s] for s in states]


def realized_utilities(
    pomdp: PrincipalPomdp, problems: ProblemSet, states: Sequence[int], actions: Sequence[int]
) -> np.ndarray:
    """Each principal's utility of one realized state/action sequence."""
    labels = _state_labels(pomdp, problems, states)
    out = np.full(problems.k, np.nan)
    for j, p in enumerate(problems.principals):
        index = {name: i for i, name in enumerate(p.states)}
        if all(lab in index for lab in labels):
            out[j] = p.utility.value([index[lab] for lab in labels], actions)
    return out


def simulate(
    pomdp: PrincipalPomdp,
    policy: FullMemoryPolicy,
    seed: int,
    count: int,
    problems: ProblemSet | None = None,
    weights: Sequence[float] | None = None,
    model_tag: int | None = None,
) -> list[Trajectory]:
    """Sample ``count`` outcomes of ``policy`` running in ``pomdp``.

    For a mixture the tag of the sampled initial state is recorded as the
    model tag.  With ``problems`` and ``weights`` each trajectory also carries
    its effective-weight path and every principal's realized utility.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    check_compatible(pomdp, policy)
    rng = make_rng(seed, pomdp_hash(pomdp))
    n = pomdp.horizon
    w = None if problems is None else weight_vector(weights, problems.k)
    cache: dict[History, np.ndarray] = {}
    out = []
    for _ in range(count):
        s = [_draw(rng, pomdp.prior)]
        o: list[int] = []
        a: list[int] = []
        for i in range(n):
            o.append(_draw(rng, pomdp.observation[s[i]]))
            h = History(tuple(o), tuple(a))
            a.append(_draw(rng, policy.distribution(h)))
            s.append(_draw(rng, pomdp.transition[s[i], a[i]]))
        tag = pomdp.tags[s[0]] if isinstance(pomdp, MixturePomdp) else model_tag
        eff = util = None
        if w is not None:
            util = realized_utilities(pomdp, problems, s, a)
            rows = []
            for i in range(1, n + 1):
                h = History(tuple(o[:i]), tuple(a[: i - 1]))
                if h not in cache:
                    cache[h] = effective_weights(problems, w, h).probabilities
                rows.append(cache[h])
            eff = np.array(rows)
        out.append(Trajectory(Outcome(tuple(s), tuple(o), tuple(a)), tag, pomdp.utility.value(s, a), eff, util))
    return out


@dataclass
class BetSettlingReport:
    weights: np.ndarray
    model: str | int
    count: int
    # tag -> (n+1, k) mean effective weights, row 0 the starting weights
    mean_weights: dict[int, np.ndarray] = field(default_factory=dict)
    tag_counts: dict[int, int] = field(default_factory=dict)
    exact_mean: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "model": self.model if isinstance(self.model, str) else self.model + 1,
            "count": self.count,
            "per_tag": {
                str(t + 1): {"count": self.tag_counts[t], "mean_weights": m.tolist()}
                for t, m in sorted(self.mean_weights.items())
            },
            "exact_mean_weights": None if self.exact_mean is None else self.exact_mean.tolist(),
        }


def bet_settling_report(
    problems: ProblemSet,
    weights: Sequence[float],
    policy: FullMemoryPolicy,
    seed: int,
    count: int,
    model: str | int = "mixture",
) -> tuple[BetSettlingReport, list[Trajectory]]:
    """Per-step mean effective weights of sampled trajectories, by true model."""
    w = weight_vector(weights, problems.k)
    if model == "mixture":
        world = build_mixture(problems, w)
        trajs = simulate(world, policy, seed, count, problems, w)
    else:
        j = int(model)
        trajs = simulate(problems.principals[j], policy, seed, count, problems, w, model_tag=j)
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for t in trajs:
        path = np.vstack([w, t.effective_weights])
        sums[t.model_tag] = sums.get(t.model_tag, 0) + path
        counts[t.model_tag] = counts.get(t.model_tag, 0) + 1
    means = {tag: sums[tag] / counts[tag] for tag in sums}
    exact = expected_effective_weights(problems, w, policy, model)
    return BetSettlingReport(w, model, count, means, counts, exact), trajs


def write_trajectories_csv(
    path: str | Path, trajs: Sequence[Trajectory], pomdp: PrincipalPomdp, k: int
):
    """``step,obs,action,state,eff_w_1..eff_w_k,model_tag``; one row per decision step."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "obs", "action", "state"] + [f"eff_w_{j + 1}" for j in range(k)] + ["model_tag"])
        for t in trajs:
            tag = "" if t.model_tag is None else t.model_tag + 1
            for i in range(pomdp.horizon):
                eff = t.effective_weights[i] if t.effective_weights is not None else [float("nan")] * k
                writer.writerow(
                    [
                        i + 1,
                        pomdp.observations[t.outcome.observations[i]],
                        pomdp.actions[t.outcome.actions[i]],
                        pomdp.states[t.outcome.states[i]],
                        *(f"{x:.9f}" for x in eff),
                        tag,
                    ]
                )
