"""Seeded random instances for tests, acceptance runs and benchmarks."""
from __future__ import annotations

import math
import random
from fractions import Fraction

import numpy as np

from .game import ConstrainedMarkovGame, ProductCost, Step, validate_game
from .stage_lp import ActionConstrainedMatrixGame


def _random_dist(rng: random.Random, keys, max_atoms: int) -> dict:
    k = rng.randint(1, min(max_atoms, len(keys)))
    chosen = rng.sample(list(keys), k)
    weights = [rng.randint(1, 3) for _ in chosen]
    total = sum(weights)
    return {c: Fraction(w, total) for c, w in zip(chosen, weights)}


def random_game(
    rng: random.Random,
    n: int = 2,
    max_states: int = 3,
    max_actions: int = 2,
    max_horizon: int = 3,
    cost_values=range(0, 4),
    denominator: int = 1,
    budget_range: tuple = (0, 6),
    reward_range: tuple = (-2, 3),
    max_cost_atoms: int = 2,
    max_next: int = 2,
    horizon: int | None = None,
) -> ConstrainedMarkovGame:
    """Random finite game. Costs are ``k / denominator`` for ``k`` in ``cost_values``;
    budgets are ``k / denominator`` for ``k`` uniform in ``budget_range * denominator``."""
    S = rng.randint(1, max_states)
    H = horizon or rng.randint(1, max_horizon)
    sizes = tuple(rng.randint(1, max_actions) for _ in range(n))
    actions = tuple(tuple(f"a{j}" for j in range(k)) for k in sizes)
    lo, hi = budget_range
    budget = tuple(Fraction(rng.randint(lo * denominator, hi * denominator), denominator) for _ in range(n))
    values = [Fraction(v, denominator) for v in cost_values]
    dyn = {}
    for h in range(1, H + 1):
        for s in range(S):
            for a in range(math.prod(sizes)):
                nxt = _random_dist(rng, range(S), max_next)
                reward = tuple(Fraction(rng.randint(*reward_range)) for _ in range(n))
                cost = ProductCost(tuple(_random_dist(rng, values, max_cost_atoms) for _ in range(n)))
                dyn[(h, s, a)] = Step(nxt, reward, cost)
    g = ConstrainedMarkovGame(tuple(f"s{j}" for j in range(S)), 0, actions, H, budget, dyn)
    assert validate_game(g).valid
    return g


def feasibility_game(rng: random.Random) -> ConstrainedMarkovGame:
    """Two players, at most 3 states, 2 actions each, horizon 3, costs 0..3, budgets 0..6."""
    return random_game(rng)


def single_agent_game(rng: random.Random) -> ConstrainedMarkovGame:
    return random_game(rng, n=1, max_states=3, max_actions=3, max_horizon=4, budget_range=(0, 8))


def sevenths_game(rng: random.Random) -> ConstrainedMarkovGame:
    """Costs and budgets on the 1/7 lattice."""
    return random_game(rng, cost_values=range(0, 15), denominator=7, budget_range=(2, 5))


def grid_game(rng: random.Random, eps: Fraction = Fraction(1, 10)) -> ConstrainedMarkovGame:
    """Costs and budgets on the ``eps / H`` grid, every player constrained."""
    while True:
        H = rng.randint(1, 3)
        den = int(H / eps)
        g = random_game(
            rng,
            horizon=H,
            cost_values=[0, den // 2, den],
            denominator=den,
            budget_range=(2, 4),
        )
        cmax = g.max_cost()
        if all(0 < c and max(c, H * c) > b for c, b in zip(cmax, g.budget)):
            return g


def scaling_game(n_states: int, seed: int = 0, horizon: int = 3) -> ConstrainedMarkovGame:
    """Two players, two actions each, costs in 0..3 (2 bits), ``n_states`` states."""
    rng = random.Random(seed * 1_000_003 + n_states)
    actions = (("x", "y"), ("x", "y"))
    dyn = {}
    for h in range(1, horizon + 1):
        for s in range(n_states):
            for a in range(4):
                succ = {(s + a) % n_states: Fraction(1, 2), (s * 3 + 1) % n_states: Fraction(1, 2)}
                nxt: dict = {}
                for k, p in succ.items():
                    nxt[k] = nxt.get(k, Fraction(0)) + p
                cost = ProductCost(
                    tuple({Fraction(rng.randint(0, 3)): Fraction(1)} for _ in range(2))
                )
                reward = tuple(Fraction(rng.randint(0, 4)) for _ in range(2))
                dyn[(h, s, a)] = Step(nxt, reward, cost)
    return ConstrainedMarkovGame(
        tuple(f"s{j}" for j in range(n_states)), 0, actions, horizon, (Fraction(5), Fraction(5)), dyn
    )


def random_matrix_game(rng: random.Random, max_players: int = 3, max_actions: int = 3) -> ActionConstrainedMatrixGame:
    """Random utilities (integers half the time, to provoke ties) and a random nonempty allowed set."""
    n = rng.randint(1, max_players)
    sizes = tuple(rng.randint(1, max_actions) for _ in range(n))
    total = math.prod(sizes)
    allowed = tuple(a for a in range(total) if rng.random() < 0.6)
    if not allowed:
        allowed = (rng.randrange(total),)
    if rng.random() < 0.5:
        u = np.array([[float(rng.randint(-3, 3)) for _ in range(total)] for _ in range(n)])
    else:
        u = np.array([[rng.uniform(-1.0, 1.0) for _ in range(total)] for _ in range(n)])
    return ActionConstrainedMatrixGame(sizes, allowed, u)
