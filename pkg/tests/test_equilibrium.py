import random
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmg.equilibrium import evaluate_policy, solve_acmg, solve_reduced_game, stage_q
from acmg.feasibility import feasible_sets
from acmg.game import ProductCost, Step, UniformCost, game_from_dict
from acmg.generators import random_game, single_agent_game
from acmg.reduction import AugmentedMarkovPolicy, build_reduced_game
from acmg.stage_lp import ActionConstrainedMatrixGame, JointDistribution
from acmg.verify import single_agent_optimum, stage_deviation_gains, unconstrained_values

from conftest import corpus_game

EXACT_ROOT = {
    "dead_end": [5, 5],
    "non_product": [4, 4],
    "prisoners_dilemma": [Fraction(41, 7), Fraction(41, 7)],
    "fractional": [6, 6],
    "stochastic": [Fraction(13, 2), Fraction(13, 2)],
    "three_player": [3, 3, 6],
    "tiny_single": [6],
}


@pytest.mark.parametrize("kind", ["cce", "ce"])
@pytest.mark.parametrize("name", sorted(EXACT_ROOT))
def test_exact_root_values(name, kind):
    sol = solve_acmg(corpus_game(name), kind, exact=True)
    assert sol.root_values() == EXACT_ROOT[name]
    approx = solve_acmg(corpus_game(name), kind)
    assert np.allclose(approx.root_values(), [float(x) for x in EXACT_ROOT[name]], atol=1e-9)


def test_tiny_single_matches_oracle():
    g = corpus_game("tiny_single")
    assert single_agent_optimum(g) == 6


def test_infeasible_returns_none():
    assert solve_acmg(corpus_game("infeasible")) is None


def test_budget_below_first_step_cost_is_infeasible():
    g = corpus_game("tiny_single")
    assert solve_acmg(replace(g, budget=(Fraction(-1),))) is None


def test_continuous_costs_need_approximation():
    g = corpus_game("tiny_single")
    dyn = dict(g.dynamics)
    key = next(iter(dyn))
    dyn[key] = Step(dyn[key].next, dyn[key].reward, ProductCost((UniformCost(Fraction(0), Fraction(1)),)))
    with pytest.raises(ValueError, match="approximation"):
        solve_acmg(replace(g, dynamics=dyn))


def test_unknown_kind():
    g = corpus_game("tiny_single")
    _, fs = feasible_sets(g)
    with pytest.raises(ValueError):
        solve_reduced_game(build_reduced_game(g, fs), "nash")


def duplicate_q(red, h, k, v_next):
    """Stage utilities computed by walking the original game's dynamics."""
    g = red.game
    s, cbar = red.states[h][k]
    out = {}
    for a in red.allowed[h][k]:
        st_ = g.step(h, s, a)
        vals = []
        for i in range(red.n_players):
            acc = st_.reward[i]
            for vec, pc in st_.cost.joint_atoms().items():
                c2 = tuple(x + int(v * red.scale) for x, v in zip(cbar, vec))
                for s2, ps in st_.next.items():
                    acc += pc * ps * v_next[i, red.index[h + 1][(s2, c2)]]
            vals.append(acc)
        out[a] = vals
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_stage_q_matches_duplicate_formula(seed):
    rng = random.Random(seed)
    g = random_game(rng, denominator=rng.choice([1, 2]))
    _, fs = feasible_sets(g)
    if fs is None:
        return
    red = build_reduced_game(g, fs)
    for h in range(1, g.horizon + 1):
        v_next = np.empty((red.n_players, red.n_states(h + 1)), dtype=object)
        for idx in np.ndindex(v_next.shape):
            v_next[idx] = Fraction(rng.randint(-5, 5), rng.randint(1, 3))
        for k in range(red.n_states(h)):
            sq = stage_q(red, h, k, v_next, exact=True)
            ref = duplicate_q(red, h, k, v_next)
            for a in range(red.n_joint):
                if a in ref:
                    assert list(sq.q[:, a]) == ref[a]
                else:
                    assert all(x is None for x in sq.q[:, a])


def test_last_step_q_is_reward():
    g = corpus_game("prisoners_dilemma")
    _, fs = feasible_sets(g)
    red = build_reduced_game(g, fs)
    H = g.horizon
    zero = np.zeros((2, red.n_states(H + 1)))
    for k in range(red.n_states(H)):
        sq = stage_q(red, H, k, zero)
        for a in sq.allowed:
            assert list(sq.q[:, a]) == [float(r) for r in red.reward[H][k][a]]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_single_player_value_is_constrained_optimum(seed):
    g = single_agent_game(random.Random(seed))
    sol = solve_acmg(g, "cce", exact=True)
    opt = single_agent_optimum(g)
    if opt is None:
        assert sol is None
    else:
        assert sol.root_values() == [opt]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["cce", "ce"]))
def test_unconstrained_game_matches_plain_backward_induction(seed, kind):
    g = random_game(random.Random(seed))
    g = replace(g, budget=tuple(g.horizon * c for c in g.max_cost()))
    sol = solve_acmg(g, kind)
    assert np.allclose(sol.root_values(), unconstrained_values(g, kind), atol=1e-8)
    red = sol.reduced
    assert not red.non_product_states()
    for h in range(1, g.horizon + 1):
        v_next = sol.values[h + 1]
        for k in range(red.n_states(h)):
            assert len(red.allowed[h][k]) == g.n_joint
            sq = stage_q(red, h, k, v_next)
            mg = ActionConstrainedMatrixGame(g.action_sizes, sq.allowed, sq.q)
            sigma = JointDistribution(g.action_sizes, sol.policy.dists[h][k])
            assert max((x for _, _, x in stage_deviation_gains(mg, sigma, kind)), default=0) <= 1e-9


def test_zero_reward_game_has_zero_values():
    g = random_game(random.Random(3), reward_range=(0, 0))
    sol = solve_acmg(replace(g, budget=(Fraction(100),) * 2), "cce")
    for arr in sol.values.values():
        assert not np.any(arr)
    red = sol.reduced
    other = AugmentedMarkovPolicy(
        red,
        {h: [{acts[-1]: 1.0} for acts in red.allowed[h]] for h in range(1, g.horizon + 1)},
    )
    assert other.support_ok()
    assert all(not np.any(v) for v in evaluate_policy(red, other).values())


def test_deterministic_chain_sums_rewards():
    g = game_from_dict(
        {
            "players": 1,
            "states": ["a", "b", "c"],
            "initial_state": "a",
            "horizon": 3,
            "budget": [6],
            "actions": [["go"]],
            "dynamics": [
                {"s": "a", "a": ["go"], "next": {"b": 1}, "reward": [1], "cost": [2]},
                {"s": "b", "a": ["go"], "next": {"c": 1}, "reward": [2], "cost": [2]},
                {"s": "c", "a": ["go"], "next": {"a": 1}, "reward": [4], "cost": [2]},
            ],
        }
    )
    sol = solve_acmg(g, exact=True)
    assert sol.root_values() == [7]
    assert evaluate_policy(sol.reduced, sol.policy, exact=True)[1][0, 0] == 7


def test_uniform_policy_on_one_state_game():
    g = game_from_dict(
        {
            "players": 1,
            "states": ["s"],
            "initial_state": "s",
            "horizon": 4,
            "budget": [0],
            "actions": [["x", "y", "z"]],
            "dynamics": [
                {"s": "s", "a": ["x"], "next": {"s": 1}, "reward": [3], "cost": [0]},
                {"s": "s", "a": ["y"], "next": {"s": 1}, "reward": [1], "cost": [0]},
                {"s": "s", "a": ["z"], "next": {"s": 1}, "reward": [-1], "cost": [0]},
            ],
        }
    )
    _, fs = feasible_sets(g)
    red = build_reduced_game(g, fs)
    third = Fraction(1, 3)
    pol = AugmentedMarkovPolicy(red, {h: [{0: third, 1: third, 2: third}] for h in range(1, 5)})
    # mean reward (3 + 1 - 1) / 3 = 1 per step
    assert evaluate_policy(red, pol, exact=True)[1][0, 0] == 4


@pytest.mark.parametrize("name", sorted(EXACT_ROOT))
@pytest.mark.parametrize("kind", ["cce", "ce"])
def test_values_consistent_with_policy(name, kind):
    sol = solve_acmg(corpus_game(name), kind)
    ev = evaluate_policy(sol.reduced, sol.policy)
    for h in sol.values:
        assert np.max(np.abs(ev[h] - sol.values[h]), initial=0) <= 1e-8
    assert sol.policy.support_ok()
    H, n = sol.reduced.horizon, sol.reduced.n_players
    bound = H * float(corpus_game(name).max_abs_reward())
    assert all(np.all(np.abs(v) <= bound + 1e-9) for v in sol.values.values())
    assert not np.any(sol.values[H + 1])
    for h in range(1, H + 1):
        for dist in sol.policy.dists[h]:
            assert abs(sum(dist.values()) - 1.0) <= 1e-12


def test_metadata():
    sol = solve_acmg(corpus_game("dead_end"), "ce")
    m = sol.metadata
    assert m["kind"] == "ce" and m["D_G"] == 9 and m["non_product_states"] == 1
    assert m["augmented_states"] == 12 and m["cost_scale"] == 1
