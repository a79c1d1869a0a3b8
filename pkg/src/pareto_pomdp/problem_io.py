"""Problem-file and policy-file JSON formats.

Problem file::

    {"horizon": 1, "actions": [...], "observations": [...],
     "principals": [{"name": ..., "states": [...],
                     "prior": {state: p},
                     "transition": {"state|action": {state: p}},
                     "observation": {state: {obs: p}},
                     "utility": {"type": "additive",
                                 "step": {"s|a|s2": r}, "terminal": {s: r}}
                              | {"type": "table", "default": x,
                                 "entries": [{"sequence": [...], "value": x}]}}]}

Missing table entries are zero.  Policy file: ``{"o1,a1,o2": {action: p}}``.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np

from .core import (
    AdditiveUtility,
    FullMemoryPolicy,
    History,
    PrincipalPomdp,
    ProblemSet,
    TableUtility,
    compatibility_violations,
    history_count,
    policy_violations,
    validate,
)


class ValidationError(ValueError):
    """A problem or policy file is malformed or violates an invariant."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def _index(labels, kind, errors):
    lookup = {label: i for i, label in enumerate(labels)}

    def get(label):
        if label not in lookup:
            errors.append(f"unknown {kind} {label!r}")
            return None
        return lookup[label]

    return get


def _split(key: str, parts: int, errors: list[str]) -> list[str] | None:
    pieces = key.split("|")
    if len(pieces) != parts:
        errors.append(f"malformed key {key!r}, expected {parts} '|'-separated labels")
        return None
    return pieces


def pomdp_from_dict(doc: dict, horizon: int, actions, observations) -> PrincipalPomdp:
    errors: list[str] = []
    states = tuple(doc.get("states", ()))
    S, A, O = len(states), len(actions), len(observations)
    st = _index(states, "state", errors)
    ac = _index(actions, "action", errors)
    ob = _index(observations, "observation", errors)

    prior = np.zeros(S)
    for s, p in doc.get("prior", {}).items():
        if (i := st(s)) is not None:
            prior[i] = p

    transition = np.zeros((S, A, S))
    for key, row in doc.get("transition", {}).items():
        parts = _split(key, 2, errors)
        if parts is None:
            continue
        s, a = st(parts[0]), ac(parts[1])
        for s2, p in row.items():
            t = st(s2)
            if None not in (s, a, t):
                transition[s, a, t] = p

    observation = np.zeros((S, O))
    for s, row in doc.get("observation", {}).items():
        i = st(s)
        for o, p in row.items():
            c = ob(o)
            if None not in (i, c):
                observation[i, c] = p

    u = doc.get("utility", {})
    if u.get("type") == "additive":
        step = np.zeros((S, A, S))
        for key, r in u.get("step", {}).items():
            parts = _split(key, 3, errors)
            if parts is None:
                continue
            idx = (st(parts[0]), ac(parts[1]), st(parts[2]))
            if None not in idx:
                step[idx] = r
        terminal = np.zeros(S)
        for s, r in u.get("terminal", {}).items():
            if (i := st(s)) is not None:
                terminal[i] = r
        utility = AdditiveUtility(step, terminal)
    elif u.get("type") == "table":
        entries = {}
        for item in u.get("entries", []):
            seq = tuple(st(s) for s in item["sequence"])
            if None not in seq:
                entries[seq] = float(item["value"])
        utility = TableUtility(entries, float(u.get("default", 0.0)))
    else:
        errors.append(f"utility type must be 'additive' or 'table', got {u.get('type')!r}")
        utility = TableUtility({}, 0.0)

    if errors:
        raise ValidationError(errors)
    return PrincipalPomdp(
        states=states,
        actions=tuple(actions),
        observations=tuple(observations),
        horizon=horizon,
        prior=prior,
        transition=transition,
        observation=observation,
        utility=utility,
        name=doc.get("name", ""),
    )


def problem_from_dict(doc: dict) -> ProblemSet:
    """Parse and validate a problem document; raises :class:`ValidationError`."""
    try:
        horizon = doc["horizon"]
        actions = tuple(doc["actions"])
        observations = tuple(doc["observations"])
        principal_docs = doc["principals"]
    except (KeyError, TypeError) as exc:
        raise ValidationError([f"problem file is missing {exc}"]) from exc
    if not principal_docs:
        raise ValidationError(["problem file has no principals"])
    if not isinstance(horizon, int) or horizon < 1:
        raise ValidationError([f"horizon must be a positive integer, got {horizon!r}"])
    pomdps, errors = [], []
    for j, pdoc in enumerate(principal_docs, start=1):
        try:
            pomdp = pomdp_from_dict(pdoc, horizon, actions, observations)
        except ValidationError as exc:
            errors.extend(f"principal {j}: {v}" for v in exc.violations)
            continue
        errors.extend(f"principal {j}: {v}" for v in validate(pomdp))
        pomdps.append(pomdp)
    if errors:
        raise ValidationError(errors)
    errors = compatibility_violations(pomdps)
    if errors:
        raise ValidationError(errors)
    return ProblemSet(tuple(pomdps))


def load_problem(path: str | Path) -> ProblemSet:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError([f"{path}: invalid JSON ({exc})"]) from exc
    return problem_from_dict(doc)


def _nonzero(mapping: dict) -> dict:
    return {k: v for k, v in mapping.items() if v != 0}


def pomdp_to_dict(p: PrincipalPomdp) -> dict[str, Any]:
    S = p.states
    doc: dict[str, Any] = {"name": p.name, "states": list(S)}
    doc["prior"] = {s: float(v) for s, v in zip(S, p.prior) if v != 0}
    doc["transition"] = {
        f"{s}|{a}": _nonzero({t: float(p.transition[i, k, m]) for m, t in enumerate(S)})
        for i, s in enumerate(S)
        for k, a in enumerate(p.actions)
    }
    doc["observation"] = {
        s: _nonzero({o: float(p.observation[i, c]) for c, o in enumerate(p.observations)})
        for i, s in enumerate(S)
    }
    u = p.utility
    if isinstance(u, AdditiveUtility):
        step = {}
        for i, k, m in zip(*np.nonzero(u.step)):
            step[f"{S[i]}|{p.actions[k]}|{S[m]}"] = float(u.step[i, k, m])
        doc["utility"] = {
            "type": "additive",
            "step": step,
            "terminal": {s: float(v) for s, v in zip(S, u.terminal) if v != 0},
        }
    else:
        doc["utility"] = {
            "type": "table",
            "default": float(u.default),
            "entries": [
                {"sequence": [S[i] for i in seq], "value": float(v)}
                for seq, v in sorted(u.entries.items())
            ],
        }
    return doc


def problem_to_dict(problems: ProblemSet) -> dict[str, Any]:
    return {
        "horizon": problems.horizon,
        "actions": list(problems.actions),
        "observations": list(problems.observations),
        "principals": [pomdp_to_dict(p) for p in problems.principals],
    }


def dump_problem(problems: ProblemSet, path: str | Path):
    Path(path).write_text(json.dumps(problem_to_dict(problems), indent=2) + "\n")


def _canonical_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def instance_hash(problems: ProblemSet) -> str:
    return _canonical_hash(problem_to_dict(problems))


def pomdp_hash(pomdp: PrincipalPomdp) -> str:
    return _canonical_hash(pomdp_to_dict(pomdp))


# --------------------------------------------------------------------------
# policies


def history_key(history: History, actions, observations) -> str:
    parts = []
    for i, o in enumerate(history.observations):
        if i:
            parts.append(actions[history.actions[i - 1]])
        parts.append(observations[o])
    return ",".join(parts)


def parse_history_key(key: str, actions, observations) -> History:
    parts = key.split(",")
    if len(parts) % 2 != 1:
        raise ValidationError([f"history key {key!r} must alternate observations and actions"])
    try:
        obs = tuple(observations.index(x) for x in parts[0::2])
        acts = tuple(actions.index(x) for x in parts[1::2])
    except ValueError as exc:
        raise ValidationError([f"history key {key!r}: {exc}"]) from exc
    return History(obs, acts)


def policy_to_dict(policy: FullMemoryPolicy) -> dict[str, dict[str, float]]:
    out = {}
    for table in policy.tables:
        for h, d in table.items():
            key = history_key(h, policy.actions, policy.observations)
            out[key] = {a: float(p) for a, p in zip(policy.actions, d) if p != 0}
    return out


def policy_from_dict(doc: dict, actions, observations, horizon: int) -> FullMemoryPolicy:
    actions, observations = tuple(actions), tuple(observations)
    tables: list[dict[History, np.ndarray]] = [{} for _ in range(horizon)]
    errors = []
    for key, dist in doc.items():
        h = parse_history_key(key, actions, observations)
        if h.step > horizon:
            errors.append(f"history {key!r} is longer than the horizon")
            continue
        vec = np.zeros(len(actions))
        for a, p in dist.items():
            if a not in actions:
                errors.append(f"history {key!r}: unknown action {a!r}")
                continue
            vec[actions.index(a)] = p
        tables[h.step - 1][h] = vec
    policy = FullMemoryPolicy(actions, observations, horizon, tuple(tables))
    errors.extend(policy_violations(policy))
    if errors:
        raise ValidationError(errors)
    return policy


def load_policy(path: str | Path, problems: ProblemSet) -> FullMemoryPolicy:
    doc = json.loads(Path(path).read_text())
    return policy_from_dict(doc, problems.actions, problems.observations, problems.horizon)


def dump_policy(policy: FullMemoryPolicy, path: str | Path):
    Path(path).write_text(json.dumps(policy_to_dict(policy), indent=2) + "\n")


__all__ = [
    "ValidationError",
    "dump_policy",
    "dump_problem",
    "history_count",
    "history_key",
    "instance_hash",
    "load_policy",
    "load_problem",
    "parse_history_key",
    "policy_from_dict",
    "policy_to_dict",
    "pomdp_hash",
    "problem_from_dict",
    "problem_to_dict",
]
