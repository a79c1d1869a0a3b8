"""Exact Pareto-optimal policies for principals who disagree about the world.

Each principal brings a finite-horizon POMDP (their beliefs) and a utility.
Policies are full-memory tables over observation/action histories.
"""

from .analysis import bet_settling_report, effective_weights, expected_effective_weights, simulate
from .core import (
    AdditiveUtility,
    FullMemoryPolicy,
    History,
    MixedPolicy,
    Outcome,
    PrincipalPomdp,
    ProblemSet,
    TableUtility,
    causal_obs_probability,
    continuation_value_unnormalized,
    evaluate,
    evaluate_all,
    joint_probability,
    validate,
)
from .instances import cake_problem, random_problem_set
from .mixture import MixturePomdp, build_mixture, principal_posterior
from .oracle import brute_force_payoffs, prop1_verify, verify_pareto
from .problem_io import load_policy, load_problem
from .solver import bellman_solve, frontier_sweep, naive_solve, pareto_solve

__version__ = "0.1.0"
