import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmg.feasibility import (
    SizeError,
    ao_solve,
    build_feasibility_dag,
    extract_feasible_sets,
    feasible_sets,
    is_feasible_action,
)
from acmg.game import cost_precision_bits, game_from_dict
from acmg.generators import feasibility_game, random_game
from acmg.verify import brute_force_feasible_sets

from conftest import CORPUS, corpus_game


def one_state(costs, budget, horizon=1):
    """Single-state game whose single player's action ``k`` has cost support ``costs[k]``."""
    names = [f"a{k}" for k in range(len(costs))]
    dyn = []
    for name, sup in zip(names, costs):
        atoms = [{"value": c, "prob": f"1/{len(sup)}"} for c in sup]
        dyn.append({"s": "s", "a": [name], "next": {"s": 1}, "reward": [1], "cost": [atoms]})
    return game_from_dict(
        {
            "players": 1,
            "states": ["s"],
            "initial_state": "s",
            "horizon": horizon,
            "budget": [budget],
            "actions": [names],
            "dynamics": dyn,
        }
    )


@pytest.mark.parametrize(
    "cbar, budget, support, expected",
    [(0, 2, [0, 1, 3], False), (1, 2, [0, 1], True), (2, 2, [0], True)],
)
def test_is_feasible_action_examples(cbar, budget, support, expected):
    g = one_state([support], budget)
    assert is_feasible_action(g, 1, 0, (cbar,), 0) is expected


def test_single_action_zero_cost_dag():
    g = one_state([[0]], 0)
    dag = ao_solve(build_feasibility_dag(g))
    assert dag.n_or + dag.n_and == 3
    fs = extract_feasible_sets(dag)
    assert fs.fs[1] == [(0, (0,))] and fs.fa[1] == {(0, (0,)): (0,)}
    assert fs.fs[2] == [(0, (0,))]


def test_two_step_expansion_prunes_dead_branch():
    g = one_state([[1], [2]], 2, horizon=2)
    dag = ao_solve(build_feasibility_dag(g))
    assert {(h,) + k for h in (1, 2, 3) for k in dag.or_nodes[h]} == {
        (1, 0, (0,)),
        (2, 0, (1,)),
        (2, 0, (2,)),
        (3, 0, (2,)),
    }
    assert dag.or_label[(2, 0, (2,))] is False
    fs = extract_feasible_sets(dag)
    assert fs.fa[1] == {(0, (0,)): (0,)}
    assert fs.fs[2] == [(0, (1,))] and fs.fs[3] == [(0, (2,))]


def test_no_feasible_first_action_gives_lone_false_root():
    g = one_state([[3], [4]], 2)
    dag, fs = feasible_sets(g)
    assert fs is None
    assert dag.n_or == 1 and dag.n_and == 0
    assert dag.or_label[dag.root] is False


def test_or_node_dies_when_any_outcome_dies():
    # the action is feasible now but one of its cost outcomes strands step 2
    g = one_state([[0, 2]], 2, horizon=2)
    dag, fs = feasible_sets(g)
    assert fs is None
    assert dag.or_label[(2, 0, (2,))] is False


def test_all_leaves_reach_horizon():
    g = one_state([[0], [1]], 10, horizon=3)
    dag, fs = feasible_sets(g)
    assert dag.or_label[dag.root] and fs is not None
    assert all(dag.or_label.values()) and all(dag.and_label.values())


def test_fractional_costs_on_lattice():
    g = one_state([["1/2"], ["1/3"]], "5/6", horizon=2)
    _, fs = feasible_sets(g)
    assert fs.scale == 6
    # 1/2 + 1/2 overshoots; 1/3 + 1/3 and mixed orders fit
    assert {c for _, c in fs.fs[3]} == {(4,), (5,)}


def test_dead_end_first_action_pruned():
    g = corpus_game("dead_end")
    _, fs = feasible_sets(g)
    bb = g.joint_index([1, 1])
    (root,) = fs.fs[1]
    assert fs.fa[1][root] == (0, 1, 2) and bb not in fs.fa[1][root]
    # (b, b) is within budget on its own at step 1
    assert is_feasible_action(g, 1, g.initial_state, (0, 0), bb)


FROZEN_SIZES = {
    "dead_end": ([1, 3, 8, 9], [3, 12, 24]),
    "non_product": ([1, 3, 4], [3, 8]),
    "prisoners_dilemma": ([1, 4, 9, 9], [4, 16, 25]),
    "fractional": ([1, 6, 21, 38], [4, 24, 56]),
    "stochastic": ([1, 10, 29, 36], [4, 33, 80]),
    "three_player": ([1, 8, 15], [7, 31]),
    "patrol": ([1, 27, 80, 80, 80], [9, 189, 352, 352]),
}


@pytest.mark.parametrize("name", sorted(FROZEN_SIZES))
def test_corpus_feasible_set_sizes(name):
    g = corpus_game(name)
    _, fs = feasible_sets(g)
    pairs, actions = FROZEN_SIZES[name]
    assert [fs.n_pairs(h) for h in range(1, g.horizon + 2)] == pairs
    assert [sum(len(x) for x in fs.fa[h].values()) for h in range(1, g.horizon + 1)] == actions


def test_infeasible_corpus_instance():
    _, fs = feasible_sets(corpus_game("infeasible"))
    assert fs is None
    assert brute_force_feasible_sets(corpus_game("infeasible")) is None


@pytest.mark.parametrize("name", CORPUS)
def test_node_count_and_distinct_cost_bounds(name):
    g = corpus_game(name)
    dag, _ = feasible_sets(g)
    d_g = len(dag.distinct_costs())
    H, S, n = g.horizon, g.n_states, g.n_players
    assert dag.n_or <= 1 + H * S * d_g
    assert d_g <= (H * 2 ** (cost_precision_bits(g) + 1)) ** n


def test_size_cap(monkeypatch):
    g = corpus_game("patrol")
    with pytest.raises(SizeError):
        build_feasibility_dag(g, max_nodes=50)
    monkeypatch.setenv("ACE_MAX_NODES", "50")
    with pytest.raises(SizeError):
        build_feasibility_dag(g)
    monkeypatch.setenv("ACE_MAX_NODES", "100000")
    build_feasibility_dag(g)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32))
def test_matches_brute_force(seed):
    g = feasibility_game(random.Random(seed))
    _, fs = feasible_sets(g)
    assert fs == brute_force_feasible_sets(g)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_feasible_sets_inside_unlabeled_dag(seed):
    g = random_game(random.Random(seed), max_actions=3)
    dag, fs = feasible_sets(g)
    if fs is None:
        return
    for h in range(1, g.horizon + 1):
        for key, acts in fs.fa[h].items():
            assert key in dag.or_nodes[h] and dag.or_label[(h,) + key]
            assert acts and set(acts) <= set(dag.or_nodes[h][key])
            assert all(dag.and_label[(h,) + key + (a,)] for a in acts)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_raising_budget_never_shrinks_feasible_sets(seed):
    rng = random.Random(seed)
    g = feasibility_game(rng)
    bigger = replace(g, budget=tuple(b + 1 for b in g.budget))
    _, small = feasible_sets(g)
    _, large = feasible_sets(bigger)
    if small is None:
        return
    assert large is not None
    for h in range(1, g.horizon + 1):
        for key, acts in small.fa[h].items():
            assert set(acts) <= set(large.fa[h][key])
