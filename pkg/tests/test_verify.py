import random
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acmg.approximation import approx_solve
from acmg.equilibrium import AceSolution, evaluate_policy, solve_acmg
from acmg.feasibility import feasible_sets
from acmg.generators import feasibility_game, random_game, sevenths_game
from acmg.reduction import AugmentedMarkovPolicy, build_reduced_game
from acmg.verify import (
    OracleCapError,
    Tolerances,
    best_feasible_deviation,
    brute_force_feasible_sets,
    check_solution,
    simulate_markov_policy,
    simulate_rollouts,
    single_agent_optimum,
)

from conftest import corpus_game

NO_ROLLOUTS = Tolerances(rollouts=0)


def lattice_policy(sol):
    """The solution's policy keyed by exact cumulative costs."""
    red = sol.reduced

    def pi(h, s, cbar):
        return sol.policy.at(h, s, tuple(int(c * red.scale) for c in cbar))

    return pi


def test_zero_cost_game_overshoot_is_minus_budget():
    g = random_game(random.Random(1), cost_values=[0], budget_range=(1, 5))
    sol = solve_acmg(g)
    stats = simulate_rollouts(sol, 500, seed=3)
    for i, b in enumerate(g.budget):
        assert all(Fraction(int(x), stats.scale) == -b for x in stats.overshoot[:, i])
    assert stats.violations == 0


def test_infeasible_fixed_policy_violates():
    g = corpus_game("tiny_single")
    rush = g.actions[0].index("rush")
    stats = simulate_markov_policy(g, lambda h, s, cbar: {rush: 1}, 200, seed=0)
    assert stats.violations > 0
    assert max(stats.max_overshoot) > 0


def test_rollouts_are_deterministic():
    sol = solve_acmg(corpus_game("stochastic"))
    a = simulate_rollouts(sol, 2000, seed=42)
    b = simulate_rollouts(sol, 2000, seed=42)
    c = simulate_rollouts(sol, 2000, seed=43)
    assert np.array_equal(a.overshoot, b.overshoot) and np.array_equal(a.returns, b.returns)
    assert not np.array_equal(a.returns, c.returns)


@pytest.mark.parametrize("name", ["stochastic", "fractional", "patrol", "three_player"])
def test_kernel_matches_reference_simulator(name):
    g = corpus_game(name)
    sol = solve_acmg(g, "ce")
    fast = simulate_rollouts(sol, 1000, seed=9)
    ref = simulate_markov_policy(g, lattice_policy(sol), 1000, seed=9)
    assert np.array_equal(fast.returns, ref.returns)
    assert np.array_equal(fast.overshoot * ref.scale, ref.overshoot * fast.scale)


def test_returns_estimate_values():
    sol = solve_acmg(corpus_game("stochastic"))
    stats = simulate_rollouts(sol, 10_000, seed=1)
    for mean, se, v in zip(stats.return_mean, stats.return_se, sol.root_values()):
        assert abs(mean - v) <= 5 * se + 1e-12


def test_sandwich_holds_on_approximate_solutions():
    rng = random.Random(12)
    seen = 0
    while seen < 5:
        g = sevenths_game(rng)
        sol = approx_solve(g, Fraction(1, 10))
        if sol is None:
            continue
        seen += 1
        stats = simulate_rollouts(sol, 2000, seed=seen)
        assert stats.sandwich_violations == 0
        assert all(x <= Fraction(1, 10) for x in stats.max_overshoot)


def test_uniform_policy_has_positive_gap():
    # with budgets lifted, defecting strictly dominates cooperating
    g = corpus_game("prisoners_dilemma")
    g = replace(g, budget=(Fraction(100), Fraction(100)))
    _, fs = feasible_sets(g)
    red = build_reduced_game(g, fs)
    uniform = {
        h: [{a: 1 / len(acts) for a in acts} for acts in red.allowed[h]] for h in range(1, g.horizon + 1)
    }
    rep = best_feasible_deviation(red, AugmentedMarkovPolicy(red, uniform), 0, "cce")
    assert rep.max_gap > 0.1
    h, k, gap = rep.worst()
    assert gap == rep.max_gap


@pytest.mark.parametrize("kind", ["cce", "ce"])
def test_single_player_gap_is_oracle_minus_value(kind):
    g = corpus_game("tiny_single")
    _, fs = feasible_sets(g)
    red = build_reduced_game(g, fs)
    first = {h: [{acts[0]: 1.0} for acts in red.allowed[h]] for h in range(1, g.horizon + 1)}
    pol = AugmentedMarkovPolicy(red, first)
    rep = best_feasible_deviation(red, pol, 0, kind)
    own = evaluate_policy(red, pol)[1][0, 0]
    assert rep.gaps[1][0] == pytest.approx(float(single_agent_optimum(g)) - own)


@pytest.mark.parametrize("kind", ["cce", "ce"])
def test_solver_output_has_no_gain(kind):
    sol = solve_acmg(corpus_game("non_product"), kind)
    for i in range(2):
        assert best_feasible_deviation(sol.reduced, sol.policy, i, kind).passed()


def test_corrupted_policy_flagged():
    sol = solve_acmg(corpus_game("non_product"))
    red = sol.reduced
    bad = {h: [dict(d) for d in row] for h, row in sol.policy.dists.items()}
    forbidden = next(a for a in range(red.n_joint) if a not in red.allowed[1][0])
    bad[1][0] = {forbidden: 1.0}
    broken = AceSolution(AugmentedMarkovPolicy(red, bad), sol.values, sol.kind, feasible_sets=sol.feasible_sets)
    rep = check_solution(broken, NO_ROLLOUTS)
    assert not rep.passed
    assert [it.name for it in rep.items] == ["support"]


def test_perturbed_values_flagged():
    sol = solve_acmg(corpus_game("stochastic"))
    values = {h: v.copy() for h, v in sol.values.items()}
    values[2][0, 0] += 1e-3
    rep = check_solution(AceSolution(sol.policy, values, sol.kind, feasible_sets=sol.feasible_sets), NO_ROLLOUTS)
    failed = {it.name for it in rep.items if not it.passed}
    assert "values" in failed


@pytest.mark.parametrize("kind", ["cce", "ce"])
def test_check_solution_passes_on_pipeline_output(kind):
    sol = solve_acmg(corpus_game("dead_end"), kind)
    rep = check_solution(sol, Tolerances(rollouts=2000))
    assert rep.passed, rep.as_dict()
    assert [it.name for it in rep.items] == ["support", "values", "deviation", "rollouts", "feasible-sets"]


def test_brute_force_cap():
    with pytest.raises(OracleCapError):
        brute_force_feasible_sets(corpus_game("patrol"), cap=10)


def test_brute_force_unconstrained_is_everything_reachable():
    g = corpus_game("stochastic")
    g = replace(g, budget=(Fraction(1000), Fraction(1000)))
    fs = brute_force_feasible_sets(g)
    assert all(len(acts) == g.n_joint for h in fs.fa for acts in fs.fa[h].values())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_brute_force_agrees_on_three_action_games(seed):
    g = random_game(random.Random(seed), max_actions=3, max_horizon=2)
    _, fs = feasible_sets(g)
    assert brute_force_feasible_sets(g) == fs


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32))
def test_solutions_never_overshoot(seed):
    g = feasibility_game(random.Random(seed))
    sol = solve_acmg(g)
    if sol is None:
        return
    stats = simulate_rollouts(sol, 300, seed=seed)
    assert stats.violations == 0 and max(stats.max_overshoot) <= 0
