import json
import random
from fractions import Fraction

import numpy as np
import pytest

from acmg.approximation import approx_solve
from acmg.documents import (
    distribution_from_dict,
    distribution_to_dict,
    dumps,
    feasible_sets_from_dict,
    feasible_sets_to_dict,
    matrix_game_from_dict,
    matrix_game_to_dict,
    reduced_from_dict,
    reduced_to_dict,
    solution_from_dict,
    solution_to_dict,
)
from acmg.equilibrium import solve_acmg
from acmg.feasibility import feasible_sets
from acmg.game import GameSchemaError
from acmg.generators import random_matrix_game
from acmg.reduction import build_reduced_game
from acmg.stage_lp import ActionConstrainedMatrixGame, solve_matrix_game

from conftest import CORPUS, corpus_game

SOLVABLE = [n for n in CORPUS if n != "infeasible"]


def reparse(doc):
    return json.loads(dumps(doc))


@pytest.mark.parametrize("name", SOLVABLE)
@pytest.mark.parametrize("exact", [False, True])
def test_solution_round_trip(name, exact):
    g = corpus_game(name)
    sol = solve_acmg(g, "ce", exact=exact)
    doc = reparse(solution_to_dict(sol))
    back = solution_from_dict(doc, g)
    assert dumps(solution_to_dict(back)) == dumps(doc)
    assert back.exact is exact and back.kind == "ce"
    assert back.root_values() == sol.root_values()


def test_approx_solution_round_trip():
    g = corpus_game("fractional")
    sol = approx_solve(g, Fraction(1, 10), "relative")
    doc = reparse(solution_to_dict(sol))
    assert doc["approximation"] == {"mode": "relative", "eps": "1/10", "ell": ["1/30", "1/36"]}
    back = solution_from_dict(doc, g)
    assert back.rounding == sol.rounding and back.source is g
    assert dumps(solution_to_dict(back)) == dumps(doc)


def test_solution_missing_pair_rejected():
    g = corpus_game("dead_end")
    doc = reparse(solution_to_dict(solve_acmg(g)))
    doc["policy"].pop()
    with pytest.raises(GameSchemaError, match="misses"):
        solution_from_dict(doc, g)


def test_solution_unknown_pair_rejected():
    g = corpus_game("dead_end")
    doc = reparse(solution_to_dict(solve_acmg(g)))
    doc["policy"][0]["cost"] = ["7", "7"]
    with pytest.raises(GameSchemaError, match="not a feasible pair"):
        solution_from_dict(doc, g)


@pytest.mark.parametrize("name", SOLVABLE)
def test_reduced_round_trip(name):
    g = corpus_game(name)
    _, fs = feasible_sets(g)
    red = build_reduced_game(g, fs)
    doc = reparse(reduced_to_dict(red))
    assert doc["augmented"] is True
    back = reduced_from_dict(doc)
    assert back.states == red.states and back.allowed == red.allowed
    assert back.trans == red.trans and back.product == red.product
    assert dumps(reduced_to_dict(back)) == dumps(doc)


def test_reduced_state_names():
    g = corpus_game("fractional")
    _, fs = feasible_sets(g)
    doc = reduced_to_dict(build_reduced_game(g, fs))
    assert [e["name"] for e in doc["layers"][0]["states"]] == ["(low,[0,0])"]
    assert [e["name"] for e in doc["layers"][1]["states"]] == [
        "(low,[0,0])",
        "(low,[0,1/3])",
        "(low,[1/2,0])",
        "(high,[0,1/3])",
        "(high,[1/2,0])",
        "(high,[1/2,1/3])",
    ]
    assert all("allowed_actions" in e for layer in doc["layers"] for e in layer["states"])


@pytest.mark.parametrize("name", SOLVABLE)
def test_feasible_sets_round_trip(name):
    g = corpus_game(name)
    _, fs = feasible_sets(g)
    doc = reparse(feasible_sets_to_dict(fs, g))
    assert all(isinstance(x, int) for layer in doc["layers"] for e in layer["pairs"] for x in e["cbar"])
    back = feasible_sets_from_dict(doc, g)
    assert back == fs
    assert dumps(feasible_sets_to_dict(back, g)) == dumps(doc)


@pytest.mark.parametrize("seed", range(20))
def test_matrix_game_and_distribution_round_trip(seed):
    mg = random_matrix_game(random.Random(seed))
    doc = reparse(matrix_game_to_dict(mg))
    back = matrix_game_from_dict(doc)
    assert back.action_sizes == mg.action_sizes and back.allowed == mg.allowed
    assert np.array_equal(back.utilities, mg.utilities)
    sigma = solve_matrix_game(mg, "ce")
    ddoc = reparse(distribution_to_dict(sigma, "ce"))
    assert distribution_from_dict(ddoc) == sigma


def test_exact_matrix_game_round_trip():
    u = np.array([[Fraction(1, 3), Fraction(0)]], dtype=object)
    mg = ActionConstrainedMatrixGame((2,), (0, 1), u)
    doc = reparse(matrix_game_to_dict(mg))
    back = matrix_game_from_dict(doc)
    assert back.exact and list(back.utilities[0]) == [Fraction(1, 3), Fraction(0)]
    sigma = solve_matrix_game(back)
    assert distribution_from_dict(reparse(distribution_to_dict(sigma, "cce"))) == sigma


def test_matrix_game_errors():
    with pytest.raises(GameSchemaError):
        matrix_game_from_dict({"action_sizes": [2], "allowed": [[3]], "utilities": [[0, 0]]})
    with pytest.raises(GameSchemaError):
        matrix_game_from_dict({"action_sizes": [2], "allowed": [], "utilities": [[0, 0]]})
    with pytest.raises(GameSchemaError):
        matrix_game_from_dict({"action_sizes": [2], "allowed": [[0]], "utilities": [[0]]})
