"""Solvers for anytime-constrained Markov games.

Typical use::

    from acmg import load_game, solve_acmg, check_solution

    g = load_game("game.json")
    sol = solve_acmg(g, "cce")
    if sol is not None:
        print(sol.root_values(), check_solution(sol).passed)
"""
from ._kernels import BACKEND
from .approximation import RoundingSpec, approx_solve, build_approx_game, choose_ell, round_down
from .equilibrium import AceSolution, evaluate_policy, solve_acmg, solve_reduced_game, stage_q
from .feasibility import (
    FeasibilityDag,
    FeasibleSets,
    SizeError,
    ao_solve,
    build_feasibility_dag,
    extract_feasible_sets,
    feasible_sets,
)
from .game import (
    ConstrainedMarkovGame,
    GameSchemaError,
    History,
    PrecisionError,
    load_game,
    parse_game,
    serialize_game,
    validate_game,
)
from .reduction import ActionConstrainedMG, AugmentedMarkovPolicy, build_reduced_game, lift_policy
from .stage_lp import (
    ActionConstrainedMatrixGame,
    JointDistribution,
    NoSolutionError,
    build_clp,
    solve_feasibility,
    solve_matrix_game,
)
from .verify import (
    best_feasible_deviation,
    brute_force_feasible_sets,
    check_solution,
    simulate_rollouts,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AceSolution",
    "ActionConstrainedMG",
    "ActionConstrainedMatrixGame",
    "AugmentedMarkovPolicy",
    "ConstrainedMarkovGame",
    "FeasibilityDag",
    "FeasibleSets",
    "GameSchemaError",
    "History",
    "JointDistribution",
    "NoSolutionError",
    "PrecisionError",
    "RoundingSpec",
    "SizeError",
    "ao_solve",
    "approx_solve",
    "best_feasible_deviation",
    "brute_force_feasible_sets",
    "build_approx_game",
    "build_clp",
    "build_feasibility_dag",
    "build_reduced_game",
    "check_solution",
    "choose_ell",
    "evaluate_policy",
    "extract_feasible_sets",
    "feasible_sets",
    "lift_policy",
    "load_game",
    "parse_game",
    "round_down",
    "serialize_game",
    "simulate_rollouts",
    "solve_acmg",
    "solve_feasibility",
    "solve_matrix_game",
    "solve_reduced_game",
    "stage_q",
    "validate_game",
]
