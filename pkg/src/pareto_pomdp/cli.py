"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 size cap exceeded, 4 a
verification failed.  The last stdout line is a one-line summary.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import bet_settling_report, write_trajectories_csv
from .core import DEFAULT_TABLE_CAP, FullMemoryPolicy, SizeCapError, evaluate_all, weight_vector
from .instances import cake_problem, pi_hat_choice
from .mixture import build_mixture
from .oracle import DEFAULT_ENUM_CAP, EnumerationCapError, brute_force_payoffs, prop1_verify, verify_pareto
from .problem_io import (
    ValidationError,
    dump_policy,
    dump_problem,
    instance_hash,
    load_policy,
    load_problem,
)
from .solver import frontier_sweep, pareto_solve

EXIT_OK, EXIT_INVALID, EXIT_CAP, EXIT_FAIL = 0, 2, 3, 4


def fmt(x: float) -> str:
    return f"{x:.9f}"


def fmt_vec(v) -> str:
    return ",".join(fmt(float(x)) for x in v)


def parse_vector(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ValidationError([f"cannot parse number list {text!r}"]) from exc


def _weights(args, problems):
    if args.weights is None:
        return np.full(problems.k, 1.0 / problems.k)
    try:
        return weight_vector(parse_vector(args.weights), problems.k)
    except ValueError as exc:
        raise ValidationError([str(exc)]) from exc


def cmd_solve(args) -> int:
    problems = load_problem(args.problem)
    w = _weights(args, problems)
    res = pareto_solve(problems, w, cap=args.cap)
    if args.out:
        dump_policy(res.policy, args.out)
    for name, v in zip(problems.names, res.payoff):
        print(f"E[{name}] = {fmt(v)}")
    print(f"RESULT solve weights={fmt_vec(w)} payoffs={fmt_vec(res.payoff)}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    problems = load_problem(args.problem)
    points = frontier_sweep(problems, args.grid, cap=args.cap)
    rows = [
        [fmt(p.weights[0]), fmt(p.weights[1]), fmt(p.payoff[0]), fmt(p.payoff[1]), i]
        for i, p in enumerate(points)
    ]
    header = ["w1", "w2", "payoff1", "payoff2", "policy_id"]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"RESULT frontier points={len(points)}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    problems = load_problem(args.problem)
    ihash = instance_hash(problems)
    report = {"mode": args.mode, "instance_hash": ihash, "verdicts": [], "witnesses": []}
    status = EXIT_OK

    if args.mode == "payoffs":
        points = brute_force_payoffs(problems, args.cap)
        for p in points:
            print(fmt_vec(p))
        report["verdicts"].append({"policies": len(points)})
        summary = f"RESULT oracle payoffs rows={len(points)}"
    elif args.mode == "verify":
        if args.target is not None:
            candidate = np.array(parse_vector(args.target))
        elif args.policy is not None:
            candidate = evaluate_all(problems, load_policy(args.policy, problems))
        else:
            raise ValidationError(["verify mode needs --target or --policy"])
        if len(candidate) != problems.k:
            raise ValidationError([f"candidate has {len(candidate)} entries for {problems.k} principals"])
        verdict = verify_pareto(problems, candidate, cap=args.cap)
        word = "pareto-optimal" if verdict.optimal else "dominated"
        report["verdicts"].append({"candidate": candidate.tolist(), "verdict": word, "achievable": verdict.achievable})
        if verdict.witness is not None:
            report["witnesses"].append(verdict.witness.tolist())
            print(f"witness {fmt_vec(verdict.witness)}")
            status = EXIT_FAIL
        summary = f"RESULT oracle verify {'PASS' if verdict.optimal else 'FAIL'} {word} candidate={fmt_vec(candidate)}"
    else:
        if args.target is None:
            raise ValidationError(["prop1 mode needs --target"])
        target = parse_vector(args.target)
        rep = prop1_verify(problems, target, args.r_grid)
        for c in rep.cases:
            report["verdicts"].append(
                {
                    "r": c.r,
                    "maximizers": [list(s) for s in c.maximizers],
                    "best_payoff": c.best_payoff.tolist(),
                    "reaches_target": c.reaches_target,
                }
            )
            if c.reaches_target:
                report["witnesses"].append({"r": c.r, "payoff": c.best_payoff.tolist()})
        report["breakpoints"] = rep.breakpoints
        print("breakpoints r = " + ", ".join(fmt(b) for b in rep.breakpoints))
        if not rep.passed:
            first = next(c for c in rep.cases if c.reaches_target)
            print(f"witness r={fmt(first.r)} payoff={fmt_vec(first.best_payoff)}")
            status = EXIT_FAIL
        summary = f"RESULT oracle prop1 {'PASS' if rep.passed else 'FAIL'} target={fmt_vec(target)}"

    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n")
    print(summary)
    return status


def cmd_trace(args) -> int:
    problems = load_problem(args.problem)
    w = _weights(args, problems)
    if args.policy:
        policy = load_policy(args.policy, problems)
    else:
        policy = pareto_solve(problems, w, cap=args.cap).policy
    model = "mixture" if args.model == "mixture" else int(args.model) - 1
    if model != "mixture" and not 0 <= model < problems.k:
        raise ValidationError([f"--model must be 'mixture' or 1..{problems.k}"])
    try:
        report, trajs = bet_settling_report(problems, w, policy, args.seed, args.count, model)
    except TypeError as exc:
        raise ValidationError([str(exc)]) from exc
    world = build_mixture(problems, w) if model == "mixture" else problems.principals[model]
    if args.out:
        write_trajectories_csv(args.out, trajs, world, problems.k)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    for tag, means in sorted(report.mean_weights.items()):
        for step, row in enumerate(means):
            print(f"model {tag + 1} step {step} mean_eff_w {fmt_vec(row)}")
    for step, row in enumerate(report.exact_mean):
        print(f"exact step {step} mean_eff_w {fmt_vec(row)}")
    print(f"RESULT trace count={args.count} model={args.model}")
    return EXIT_OK


def cmd_demo_cake(args) -> int:
    problems = cake_problem()
    out = Path(args.out or "cake.json")
    dump_problem(problems, out)
    print(f"wrote {out}")

    res = pareto_solve(problems, [0.5, 0.5])
    e1, e2 = res.payoff
    if abs(e1 - 27) < 1e-9 and abs(e2 - 27) < 1e-9:
        print("E1 = E2 = 27 under pi-hat")
    print(f"pareto_solve w=(0.5,0.5): red -> {_choice(res.policy, 0)}, green -> {_choice(res.policy, 1)}; "
          f"payoffs {fmt_vec(res.payoff)}")
    half = evaluate_all(problems, FullMemoryPolicy.constant(problems.actions, problems.observations, 1, 1))
    print(f"(half,half) yields {half[0]:g},{half[1]:g}")
    hat = evaluate_all(problems, FullMemoryPolicy.from_function(problems.actions, problems.observations, 1, pi_hat_choice))
    print(f"pi-hat yields {fmt_vec(hat)}")

    print("frontier (grid 101):")
    for p in frontier_sweep(problems, 101):
        print(f"  w1={fmt(p.weights[0])} payoff={fmt_vec(p.payoff)}")

    rep = prop1_verify(problems, [27.0, 27.0], 1001)
    print("prop1 breakpoints r = " + " and ".join(_fraction(b) for b in rep.breakpoints))
    print(f"prop1 fixed-weight agents reach (27,27): {'never' if rep.passed else 'yes'}")
    print(f"RESULT demo-cake payoffs={fmt_vec(res.payoff)} prop1={'PASS' if rep.passed else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _choice(policy, obs: int) -> str:
    dist = next(d for h, d in policy.tables[0].items() if h.observations == (obs,))
    return policy.actions[int(np.argmax(dist))]


def _fraction(x: float) -> str:
    from fractions import Fraction

    f = Fraction(x).limit_denominator(1000)
    return f"{f.numerator}/{f.denominator}" if abs(float(f) - x) < 1e-12 else fmt(x)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pareto-pomdp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, problem=True):
        if problem:
            p.add_argument("--problem", required=True, help="problem JSON file")
        p.add_argument("--out", help="output path")
        p.add_argument("--cap", type=int, default=None, help="size cap override")

    p = sub.add_parser("solve", help="Pareto-optimal policy for given weights")
    common(p)
    p.add_argument("--weights", help="w1,w2[,...]; default uniform")
    p.set_defaults(func=cmd_solve, default_cap=DEFAULT_TABLE_CAP)

    p = sub.add_parser("frontier", help="weight sweep of the Pareto frontier (2 principals)")
    common(p)
    p.add_argument("--grid", type=int, default=101)
    p.set_defaults(func=cmd_frontier, default_cap=DEFAULT_TABLE_CAP)

    p = sub.add_parser("oracle", help="brute-force payoffs, dominance check, fixed-weight check")
    common(p)
    p.add_argument("--mode", choices=("payoffs", "verify", "prop1"), required=True)
    p.add_argument("--target", help="p1,p2 payoff to verify or reach")
    p.add_argument("--policy", help="policy JSON whose payoff to verify")
    p.add_argument("--r-grid", type=int, default=1001, dest="r_grid")
    p.set_defaults(func=cmd_oracle, default_cap=DEFAULT_ENUM_CAP)

    p = sub.add_parser("trace", help="sample trajectories and effective-weight paths")
    common(p)
    p.add_argument("--weights", help="w1,w2[,...]; default uniform")
    p.add_argument("--policy", help="policy JSON; default: pareto_solve at --weights")
    p.add_argument("--model", default="mixture", help="'mixture' or a 1-based principal index")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--report", help="report JSON path")
    p.set_defaults(func=cmd_trace, default_cap=DEFAULT_TABLE_CAP)

    p = sub.add_parser("demo-cake", help="write cake.json and reproduce the cake example")
    common(p, problem=False)
    p.set_defaults(func=cmd_demo_cake, default_cap=DEFAULT_TABLE_CAP)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cap is None:
        args.cap = args.default_cap
    if getattr(args, "count", 1) < 1:
        print("error: --count must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    if getattr(args, "grid", 2) < 2:
        print("error: --grid must be at least 2", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        print("RESULT error invalid-input")
        return EXIT_INVALID
    except (SizeCapError, EnumerationCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("RESULT error size-cap")
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
