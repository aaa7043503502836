"""Backward induction over the reduced game, and the end-to-end pipeline."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .feasibility import FeasibleSets, build_feasibility_dag, ao_solve, extract_feasible_sets
from .game import ConstrainedMarkovGame, cost_precision_bits
from .reduction import ActionConstrainedMG, AugmentedMarkovPolicy, build_reduced_game
from .stage_lp import CCE, KINDS, ActionConstrainedMatrixGame, NoSolutionError, solve_matrix_game


@dataclass
class StageQ:
    """Stage utilities ``q[i, a]``; only columns in ``allowed`` are meaningful."""

    q: np.ndarray
    allowed: tuple


@dataclass
class AceSolution:
    policy: AugmentedMarkovPolicy
    values: dict  # h -> array (n, |S_h|), h = 1..H+1
    kind: str
    exact: bool = False
    feasible_sets: FeasibleSets | None = None
    metadata: dict = field(default_factory=dict)
    # set by approximation: the rounding used and the game it approximates
    rounding: object = None
    source: ConstrainedMarkovGame | None = None

    @property
    def reduced(self) -> ActionConstrainedMG:
        return self.policy.reduced

    def root_values(self) -> list:
        conv = Fraction if self.exact else float
        return [conv(self.values[1][i, 0]) for i in range(self.reduced.n_players)]


def _zeros(n, m, exact):
    if exact:
        out = np.empty((n, m), dtype=object)
        out.fill(Fraction(0))
        return out
    return np.zeros((n, m))


def stage_q(red: ActionConstrainedMG, h: int, k: int, v_next: np.ndarray, exact: bool = False) -> StageQ:
    """``r + sum P V_next`` on allowed actions; NaN (None if exact) elsewhere."""
    n = red.n_players
    if exact:
        q = np.empty((n, red.n_joint), dtype=object)
    else:
        q = np.full((n, red.n_joint), np.nan)
    allowed = red.allowed[h][k]
    rows, rews = red.trans[h][k], red.reward[h][k]
    for a in allowed:
        for i in range(n):
            if exact:
                acc = rews[a][i]
                for k2, p in rows[a]:
                    acc += p * v_next[i, k2]
            else:
                acc = float(rews[a][i])
                for k2, p in rows[a]:
                    acc += float(p) * v_next[i, k2]
            q[i, a] = acc
    return StageQ(q, allowed)


def solve_reduced_game(red: ActionConstrainedMG, kind: str = CCE, exact: bool = False) -> AceSolution:
    """Solve one constrained equilibrium program per augmented state, last step first."""
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    H, n = red.horizon, red.n_players
    values = {H + 1: _zeros(n, red.n_states(H + 1), exact)}
    dists: dict = {}
    n_lp = 0
    for h in range(H, 0, -1):
        v_next = values[h + 1]
        vh = _zeros(n, red.n_states(h), exact)
        dh = []
        for k in range(red.n_states(h)):
            sq = stage_q(red, h, k, v_next, exact)
            mg = ActionConstrainedMatrixGame(red.action_sizes, sq.allowed, sq.q)
            try:
                sigma = solve_matrix_game(mg, kind)
            except NoSolutionError as exc:
                raise RuntimeError(f"stage program failed at h={h}, state {red.states[h][k]}") from exc
            n_lp += len(sq.allowed) > 1
            for i in range(n):
                if exact:
                    vh[i, k] = sum((p * sq.q[i, a] for a, p in sigma.probs.items()), Fraction(0))
                else:
                    vh[i, k] = sum(p * sq.q[i, a] for a, p in sigma.probs.items())
            dh.append(sigma.probs)
        values[h] = vh
        dists[h] = dh
    policy = AugmentedMarkovPolicy(red, dists)
    return AceSolution(policy, values, kind, exact, metadata={"stage_programs": n_lp})


def evaluate_policy(red: ActionConstrainedMG, policy: AugmentedMarkovPolicy, exact: bool = False) -> dict:
    """Exact backward evaluation of a Markov policy on the reduced game."""
    H, n = red.horizon, red.n_players
    values = {H + 1: _zeros(n, red.n_states(H + 1), exact)}
    conv = (lambda x: Fraction(x)) if exact else float
    for h in range(H, 0, -1):
        nxt = values[h + 1]
        vh = _zeros(n, red.n_states(h), exact)
        for k in range(red.n_states(h)):
            rows, rews = red.trans[h][k], red.reward[h][k]
            for a, pa in policy.dists[h][k].items():
                if pa == 0:
                    continue
                pa = conv(pa)
                for i in range(n):
                    cont = conv(rews[a][i])
                    for k2, p in rows[a]:
                        cont += conv(p) * nxt[i, k2]
                    vh[i, k] += pa * cont
        values[h] = vh
    return values


def solve_acmg(
    g: ConstrainedMarkovGame,
    kind: str = CCE,
    exact: bool = False,
    max_nodes: int | None = None,
) -> AceSolution | None:
    """Feasibility, reduction, then backward induction. ``None`` means infeasible."""
    if g.has_continuous_costs:
        raise ValueError("continuous cost distributions require approximation mode")
    t0 = time.perf_counter()
    dag = ao_solve(build_feasibility_dag(g, max_nodes=max_nodes))
    fs = extract_feasible_sets(dag)
    t1 = time.perf_counter()
    meta = {
        "kind": kind,
        "exact": exact,
        "D_G": len(dag.distinct_costs()),
        "or_nodes": dag.n_or,
        "and_nodes": dag.n_and,
        "cost_bits": cost_precision_bits(g),
        "cost_scale": dag.scale,
        "time_feasibility": t1 - t0,
    }
    if fs is None:
        return None
    red = build_reduced_game(g, fs)
    t2 = time.perf_counter()
    sol = solve_reduced_game(red, kind, exact)
    t3 = time.perf_counter()
    meta.update(
        augmented_states=sum(red.n_states(h) for h in range(1, g.horizon + 1)),
        non_product_states=len(red.non_product_states()),
        time_reduction=t2 - t1,
        time_solve=t3 - t2,
        **sol.metadata,
    )
    sol.feasible_sets = fs
    sol.metadata = meta
    return sol
