"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--rollouts 20000] [--repeat 3]

Both backends must produce identical results; the script checks that before
reporting timings.
"""
from __future__ import annotations

import argparse
import random
import time
from pathlib import Path

import numpy as np

from acmg import _kernels
from acmg.game import load_game
from acmg.equilibrium import solve_acmg
from acmg.generators import random_matrix_game
from acmg.stage_lp import LP_TOL, MAX_PIVOTS, PIVOT_TOL, build_clp, sanitize_utilities
from acmg.verify import compile_rollouts, simulate_rollouts

CORPUS = Path(__file__).resolve().parents[1] / "src" / "acmg" / "corpus"


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def tableaus(n_games, seed):
    """Phase-1 tableaus for random 3-player, 3-action CE programs."""
    rng = random.Random(seed)
    out = []
    while len(out) < n_games:
        mg = random_matrix_game(rng, max_players=3, max_actions=3)
        clp = build_clp(sanitize_utilities(mg), "ce")
        k, m = clp.G.shape[1], clp.G.shape[0]
        if k < 2:
            continue
        ncols = k + m + 1
        T = np.zeros((m + 2, ncols + 1))
        T[0, :k] = -1.0
        T[0, ncols] = -1.0
        T[1 : m + 1, :k] = -clp.G
        T[1 : m + 1, k : k + m] = np.eye(m)
        T[m + 1, :k] = 1.0
        T[m + 1, ncols - 1] = 1.0
        T[m + 1, ncols] = 1.0
        basis = np.array([k + r for r in range(m)] + [ncols - 1], dtype=np.int64)
        out.append((T, basis))
    return out


def run_phase1(mod, problems):
    results = []
    for T0, b0 in problems:
        T, b = T0.copy(), b0.copy()
        if mod is _kernels.fallback:
            rows, bas = T.tolist(), b.tolist()
            it = mod.phase1(rows, bas, PIVOT_TOL, MAX_PIVOTS)
            T, b = np.array(rows), np.array(bas)
        else:
            it = mod.phase1(T, b, PIVOT_TOL, MAX_PIVOTS)
        results.append((it, -T[0, -1] <= LP_TOL, tuple(b)))
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rollouts", type=int, default=20_000)
    ap.add_argument("--lps", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    problems = tableaus(args.lps, seed=1)
    tc, rc = best_of(lambda: run_phase1(_kernels.compiled, problems), args.repeat)
    tp, rp = best_of(lambda: run_phase1(_kernels.fallback, problems), args.repeat)
    assert rc == rp, "phase-1 backends disagree"
    print(f"phase1   {args.lps} CE programs   compiled {tc * 1e3:8.1f} ms   python {tp * 1e3:8.1f} ms   x{tp / tc:6.1f}")

    for name in ("patrol", "stochastic"):
        sol = solve_acmg(load_game(CORPUS / f"{name}.json"), "cce")
        tables = compile_rollouts(sol)
        tc, sc = best_of(lambda: simulate_rollouts(sol, args.rollouts, 7, backend="compiled", tables=tables), args.repeat)
        tp, sp = best_of(lambda: simulate_rollouts(sol, args.rollouts, 7, backend="python", tables=tables), args.repeat)
        assert np.array_equal(sc.overshoot, sp.overshoot) and np.array_equal(sc.returns, sp.returns)
        print(
            f"rollouts {name:<10} N={args.rollouts:<6} compiled {tc * 1e3:8.1f} ms   "
            f"python {tp * 1e3:8.1f} ms   x{tp / tc:6.1f}"
        )


if __name__ == "__main__":
    main()
