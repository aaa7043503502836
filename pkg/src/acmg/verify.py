"""Independent checks: brute-force feasibility, seeded rollouts, deviation DP.

Nothing here reuses the feasibility search or the stage programs it checks.
Feasibility is recomputed by plain recursion on exact fractions, and
equilibrium quality is measured by a best-response dynamic program.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import _kernels
from ._kernels._fallback import GOLDEN, MASK, mix64, stream_start
from .approximation import make_rounder
from .equilibrium import AceSolution, evaluate_policy
from .feasibility import FeasibleSets
from .game import ConstrainedMarkovGame, PrecisionError
from .reduction import ActionConstrainedMG, AugmentedMarkovPolicy
from .stage_lp import CCE, CE, ActionConstrainedMatrixGame, JointDistribution, solve_matrix_game

DEVIATION_TOL = 1e-6
VALUE_TOL = 1e-8
DEFAULT_ORACLE_CAP = 10**5


class OracleCapError(RuntimeError):
    """Instance too large for the brute-force oracle."""


# ---------------------------------------------------------------------------
# brute-force feasible sets


def _supports(g: ConstrainedMarkovGame, h, s, a):
    st = g.step(h, s, a)
    costs = [vec for vec, p in st.cost.joint_atoms().items() if p > 0]
    nxt = [s2 for s2, p in st.next.items() if p > 0]
    return costs, nxt


def brute_force_feasible_sets(g: ConstrainedMarkovGame, cap: int = DEFAULT_ORACLE_CAP) -> FeasibleSets | None:
    """Feasible (state, cost) pairs straight from the definition.

    A pair is feasible iff some action keeps every supported outcome within
    budget and every resulting pair is feasible one step later.
    """
    H, B, A = g.horizon, g.budget, g.n_joint
    memo: dict = {}

    def ok_action(h, s, cbar, a):
        costs, nxt = _supports(g, h, s, a)
        for c in costs:
            c2 = tuple(x + y for x, y in zip(cbar, c))
            if any(x > b for x, b in zip(c2, B)):
                return False
            if not all(feasible(h + 1, s2, c2) for s2 in nxt):
                return False
        return True

    def feasible(h, s, cbar):
        if h == H + 1:
            return True
        key = (h, s, cbar)
        if key not in memo:
            if len(memo) >= cap:
                raise OracleCapError(f"more than {cap} memo entries")
            memo[key] = any(ok_action(h, s, cbar, a) for a in range(A))
        return memo[key]

    zero = tuple(Fraction(0) for _ in B)
    if not feasible(1, g.initial_state, zero):
        return None
    fs: dict = {}
    fa: dict = {}
    layer = {(g.initial_state, zero)}
    for h in range(1, H + 1):
        fs[h] = layer
        fa[h] = {}
        nxt = set()
        for s, cbar in layer:
            acts = tuple(a for a in range(A) if ok_action(h, s, cbar, a))
            fa[h][(s, cbar)] = acts
            for a in acts:
                costs, succ = _supports(g, h, s, a)
                for c in costs:
                    c2 = tuple(x + y for x, y in zip(cbar, c))
                    nxt.update((s2, c2) for s2 in succ)
        layer = nxt
    fs[H + 1] = layer
    # express on an integer lattice so the result compares with the solver's
    den = 1
    for pairs in fs.values():
        for _, cbar in pairs:
            for x in cbar:
                den = math.lcm(den, x.denominator)

    def lat(c):
        return tuple(int(x * den) for x in c)

    fs_out = {h: sorted((s, lat(c)) for s, c in pairs) for h, pairs in fs.items()}
    fa_out = {h: {(s, lat(c)): acts for (s, c), acts in d.items()} for h, d in fa.items()}
    return FeasibleSets(H, den, fs_out, fa_out)


# ---------------------------------------------------------------------------
# single-agent and unconstrained reference solvers


def single_agent_optimum(g: ConstrainedMarkovGame) -> Fraction | None:
    """Best expected reward of a one-player game under anytime constraints."""
    if g.n_players != 1:
        raise ValueError("single-agent oracle needs exactly one player")
    H, (B,) = g.horizon, g.budget

    @lru_cache(maxsize=None)
    def value(h, s, c):
        # None: no feasible continuation
        if h == H + 1:
            return Fraction(0)
        best = None
        for a in range(g.n_joint):
            st = g.step(h, s, a)
            total = st.reward[0]
            for (cost,), pc in st.cost.joint_atoms().items():
                if pc == 0:
                    continue
                if c + cost > B:
                    total = None
                    break
                for s2, ps in st.next.items():
                    if ps == 0:
                        continue
                    v = value(h + 1, s2, c + cost)
                    if v is None:
                        total = None
                        break
                    total += pc * ps * v
                if total is None:
                    break
            if total is not None and (best is None or total > best):
                best = total
        return best

    return value(1, g.initial_state, Fraction(0))


def unconstrained_values(g: ConstrainedMarkovGame, kind: str = CCE) -> np.ndarray:
    """Root values of plain backward induction over the original states."""
    H, n, S = g.horizon, g.n_players, g.n_states
    everything = tuple(range(g.n_joint))
    v = np.zeros((n, S))
    for h in range(H, 0, -1):
        nv = np.zeros((n, S))
        for s in range(S):
            q = np.zeros((n, g.n_joint))
            for a in everything:
                st = g.step(h, s, a)
                for i in range(n):
                    q[i, a] = float(st.reward[i]) + sum(float(p) * v[i, s2] for s2, p in st.next.items())
            sigma = solve_matrix_game(ActionConstrainedMatrixGame(g.action_sizes, everything, q), kind)
            for a, p in sigma.probs.items():
                nv[:, s] += p * q[:, a]
        v = nv
    return v[:, g.initial_state]


# ---------------------------------------------------------------------------
# stage-game deviation gains


def _own(sizes, i, a):
    return (a // math.prod(sizes[i + 1 :])) % sizes[i]


def _with(sizes, i, b, a):
    """Flat joint action ``a`` with player ``i``'s component replaced by ``b``."""
    stride = math.prod(sizes[i + 1 :])
    return a + (b - (a // stride) % sizes[i]) * stride


def stage_deviation_gains(game: ActionConstrainedMatrixGame, sigma: JointDistribution, kind: str = CCE) -> list:
    """Every pure deviation gain ``(player, label, gain)``.

    A deviation that moves any supported joint action outside the allowed
    set has utility minus infinity, so its gain is ``-inf``.
    """
    sizes = game.action_sizes
    X = set(game.allowed)
    u = game.utilities
    probs = {a: p for a, p in sigma.probs.items() if p > 0}
    out = []
    for i, k in enumerate(sizes):
        base = {a: float(u[i, a]) for a in probs}
        if kind == CCE:
            for b in range(k):
                moved = {a: _with(sizes, i, b, a) for a in probs}
                if any(m not in X for m in moved.values()):
                    out.append((i, (b,), -math.inf))
                    continue
                gain = sum(float(p) * (float(u[i, moved[a]]) - base[a]) for a, p in probs.items())
                out.append((i, (b,), gain))
        elif kind == CE:
            for ai in range(k):
                rec = {a: p for a, p in probs.items() if _own(sizes, i, a) == ai}
                for b in range(k):
                    if b == ai:
                        continue
                    moved = {a: _with(sizes, i, b, a) for a in rec}
                    if any(m not in X for m in moved.values()):
                        out.append((i, (ai, b), -math.inf))
                        continue
                    gain = sum(float(p) * (float(u[i, moved[a]]) - base[a]) for a, p in rec.items())
                    out.append((i, (ai, b), gain))
        else:
            raise ValueError(f"unknown kind {kind!r}")
    return out


# ---------------------------------------------------------------------------
# best feasible unilateral deviation in the reduced game


@dataclass
class DeviationReport:
    player: int
    kind: str
    best: dict  # h -> array over augmented states
    gaps: dict  # h -> array over augmented states

    @property
    def max_gap(self) -> float:
        return max((float(g.max()) for g in self.gaps.values() if len(g)), default=0.0)

    def passed(self, tol: float = DEVIATION_TOL) -> bool:
        return self.max_gap <= tol

    def worst(self) -> tuple:
        h, k = max(
            ((h, int(np.argmax(g))) for h, g in self.gaps.items() if len(g)),
            key=lambda hk: self.gaps[hk[0]][hk[1]],
        )
        return h, k, float(self.gaps[h][k])


def best_feasible_deviation(
    red: ActionConstrainedMG,
    policy: AugmentedMarkovPolicy,
    i: int,
    kind: str = CCE,
    values: dict | None = None,
) -> DeviationReport:
    """Value of player ``i``'s best feasible Markov deviation at every state.

    At each state the deviator may follow the recommendation or, for CCE,
    commit to a fixed own action; for CE it may remap each recommended own
    action. A deviation is only available if the resulting joint action is
    allowed for every action profile the others may play. Gaps are measured
    against ``values`` (the policy's own values when omitted).
    """
    if values is None:
        values = evaluate_policy(red, policy)
    sizes = red.action_sizes
    H = red.horizon
    w_next = np.zeros(red.n_states(H + 1))
    best, gaps = {}, {}
    for h in range(H, 0, -1):
        m = red.n_states(h)
        w = np.zeros(m)
        for k in range(m):
            allowed = set(red.allowed[h][k])
            rows, rews = red.trans[h][k], red.reward[h][k]

            def q(a):
                return float(rews[a][i]) + sum(float(p) * w_next[k2] for k2, p in rows[a])

            probs = {a: float(p) for a, p in policy.dists[h][k].items() if p > 0}
            if kind == CCE:
                top = sum(p * q(a) for a, p in probs.items())
                for b in range(sizes[i]):
                    moved = {a: _with(sizes, i, b, a) for a in probs}
                    if all(x in allowed for x in moved.values()):
                        top = max(top, sum(p * q(moved[a]) for a, p in probs.items()))
            elif kind == CE:
                top = 0.0
                by_own: dict = {}
                for a, p in probs.items():
                    by_own.setdefault(_own(sizes, i, a), {})[a] = p
                for ai, rec in by_own.items():
                    opt = sum(p * q(a) for a, p in rec.items())
                    for b in range(sizes[i]):
                        if b == ai:
                            continue
                        moved = {a: _with(sizes, i, b, a) for a in rec}
                        if all(x in allowed for x in moved.values()):
                            opt = max(opt, sum(p * q(moved[a]) for a, p in rec.items()))
                    top += opt
            else:
                raise ValueError(f"unknown kind {kind!r}")
            w[k] = top
        best[h] = w
        gaps[h] = w - np.array([float(x) for x in values[h][i]])
        w_next = w
    return DeviationReport(i, kind, best, gaps)


# ---------------------------------------------------------------------------
# rollouts


@dataclass
class RolloutStats:
    n_rollouts: int
    seed: int
    scale: int  # overshoot lattice: divide by scale for cost units
    overshoot: np.ndarray  # (N, n) integers, max over steps of cbar - B
    returns: np.ndarray  # (N, n)
    tolerance: tuple  # per-player allowed overshoot, in cost units
    sandwich_violations: int = 0
    backend: str = ""

    @property
    def max_overshoot(self) -> list:
        return [Fraction(int(x), self.scale) for x in self.overshoot.max(axis=0)]

    @property
    def violations(self) -> int:
        lim = np.array([math.floor(t * self.scale) for t in self.tolerance], dtype=np.int64)
        return int(np.any(self.overshoot > lim, axis=1).sum())

    @property
    def return_mean(self) -> list:
        return self.returns.mean(axis=0).tolist()

    @property
    def return_se(self) -> list:
        if self.n_rollouts < 2:
            return [0.0] * self.returns.shape[1]
        return (self.returns.std(axis=0, ddof=1) / math.sqrt(self.n_rollouts)).tolist()


class LeftFeasibleSetsError(RuntimeError):
    """A rollout reached a (state, cost) pair the policy does not cover."""


@dataclass
class RolloutTables:
    args: tuple
    scale: int
    n_players: int
    tolerance: tuple


def _lcm_all(xs) -> int:
    out = 1
    for x in xs:
        out = math.lcm(out, Fraction(x).denominator)
    return out


def compile_rollouts(solution: AceSolution, game: ConstrainedMarkovGame | None = None) -> RolloutTables:
    """Flatten a solution and its true game into the rollout kernel's arrays.

    For an approximate solution the true game is ``solution.source``; each
    realized cost is passed through the same rounding to track the surrogate
    cumulative cost that indexes the policy.
    """
    red = solution.reduced
    spec = solution.rounding
    g = game if game is not None else (solution.source or red.game)
    if g.has_continuous_costs:
        raise ValueError("rollouts need finite-support costs")
    n, H, S, A = g.n_players, g.horizon, g.n_states, g.n_joint
    if spec is not None:
        rnd = make_rounder(g, spec)
        cmax = g.max_cost()
        ell = [x if x is not None else 0 for x in spec.ell]
        check = [0 if ex else 1 for ex in rnd.exempt]
        tol = spec.tolerance(g.budget)

        def surrogate(c):
            return rnd.vector(c)
    else:
        cmax = [Fraction(0)] * n
        ell = [0] * n
        check = [0] * n
        tol = tuple(Fraction(0) for _ in range(n))

        def surrogate(c):
            return c

    atoms = {key: sorted((v, p) for v, p in st.cost.joint_atoms().items() if p > 0) for key, st in g.dynamics.items()}
    L = math.lcm(g.cost_scale, red.scale, _lcm_all(ell), _lcm_all(cmax), _lcm_all(g.budget))
    top = max((abs(x) for lst in atoms.values() for v, _ in lst for x in v), default=Fraction(0))
    if (top * H + max(abs(b) for b in g.budget) + 1) * L >= 2**62:
        raise PrecisionError("cost lattice too fine for 64-bit rollouts")
    conv = L // red.scale

    # nodes: augmented states of every layer, numbered consecutively
    offset = {}
    node_state, node_cost = [], []
    for h in range(1, H + 2):
        offset[h] = len(node_state)
        for s, cbar in red.states[h]:
            node_state.append(s)
            node_cost.append([c * conv for c in cbar])

    # model tables over e = ((h-1) S + s) A + a
    ns_ptr, ns_state, ns_cdf = [0], [], []
    ca_ptr, ca_cdf, ca_cost = [0], [], []
    reward = []
    for h in range(1, H + 1):
        for s in range(S):
            for a in range(A):
                st = g.step(h, s, a)
                acc = 0.0
                for s2, p in sorted(st.next.items()):
                    if p > 0:
                        acc += float(p)
                        ns_state.append(s2)
                        ns_cdf.append(acc)
                ns_ptr.append(len(ns_state))
                acc = 0.0
                for v, p in atoms[(h, s, a)]:
                    acc += float(p)
                    ca_cdf.append(acc)
                    ca_cost.append([int(x * L) for x in v])
                ca_ptr.append(len(ca_cdf))
                reward.append([float(r) for r in st.reward])

    pol_ptr, pol_act, pol_cdf = [0], [], []
    succ_ptr, succ = [], []
    for h in range(1, H + 2):
        for k in range(red.n_states(h)):
            if h <= H:
                s, cbar = red.states[h][k]
                acc = 0.0
                for a, p in sorted(solution.policy.dists[h][k].items()):
                    if p <= 0:
                        continue
                    acc += float(p)
                    pol_act.append(a)
                    pol_cdf.append(acc)
                    succ_ptr.append(len(succ))
                    st = g.step(h, s, a)
                    nxt_states = [s2 for s2, p2 in sorted(st.next.items()) if p2 > 0]
                    for v, _ in atoms[(h, s, a)]:
                        inc = surrogate(v)
                        lat = [int(x * red.scale) for x in inc]
                        c2 = tuple(x + y for x, y in zip(cbar, lat))
                        for s2 in nxt_states:
                            k2 = red.index[h + 1].get((s2, c2))
                            succ.append(-1 if k2 is None else offset[h + 1] + k2)
            pol_ptr.append(len(pol_act))
    if not succ:
        succ.append(-1)

    i64 = np.int64
    args = (
        H, n, 0, S, A, offset[1],
        np.array(pol_ptr, dtype=i64), np.array(pol_act, dtype=i64), np.array(pol_cdf, dtype=float),
        np.array(node_state, dtype=i64),
        np.array(ns_ptr, dtype=i64), np.array(ns_state, dtype=i64), np.array(ns_cdf, dtype=float),
        np.array(ca_ptr, dtype=i64), np.array(ca_cdf, dtype=float), np.array(ca_cost, dtype=i64).reshape(-1, n),
        np.array(reward, dtype=float).reshape(-1, n),
        np.array(succ_ptr, dtype=i64), np.array(succ, dtype=i64),
        np.array([int(b * L) for b in g.budget], dtype=i64),
        np.array(node_cost, dtype=i64).reshape(-1, n),
        np.array([int(x * L) for x in ell], dtype=i64),
        np.array([int(x * L) for x in cmax], dtype=i64),
        np.array(check, dtype=i64),
    )
    return RolloutTables(args, L, n, tuple(tol))


def simulate_rollouts(
    solution: AceSolution,
    n_rollouts: int = 10_000,
    seed: int = 0,
    game: ConstrainedMarkovGame | None = None,
    backend: str | None = None,
    tables: RolloutTables | None = None,
) -> RolloutStats:
    """Seeded rollouts of the lifted policy in the true game."""
    if tables is None:
        tables = compile_rollouts(solution, game)
    H, n, _, *rest = tables.args
    over = np.zeros((n_rollouts, n), dtype=np.int64)
    rets = np.zeros((n_rollouts, n))
    status, sandwich, bad = _kernels.rollouts(n_rollouts, H, n, seed & MASK, *rest, over, rets, backend=backend)
    if status:
        raise LeftFeasibleSetsError(f"rollout {bad} left the feasible sets")
    name = backend or _kernels.BACKEND
    return RolloutStats(n_rollouts, seed, tables.scale, over, rets, tables.tolerance, sandwich, name)


def simulate_markov_policy(g: ConstrainedMarkovGame, policy, n_rollouts: int, seed: int) -> RolloutStats:
    """Rollouts of any policy of the form ``policy(h, s, cbar) -> {action: prob}``.

    Pure Python with exact cumulative costs; uses the same random stream as
    the compiled kernel, so it also serves as a cross-check of that kernel.
    """
    n, H = g.n_players, g.horizon
    L = g.cost_scale
    over = np.zeros((n_rollouts, n), dtype=np.int64)
    rets = np.zeros((n_rollouts, n))

    def draw(state, items):
        u = (mix64(state) >> 11) * (1.0 / 9007199254740992.0)
        acc = 0.0
        for j, (x, p) in enumerate(items):
            acc += float(p)
            if u < acc or j == len(items) - 1:
                return x

    for r in range(n_rollouts):
        state = stream_start(seed, r)
        s = g.initial_state
        cbar = tuple(Fraction(0) for _ in range(n))
        for h in range(1, H + 1):
            dist = sorted((a, p) for a, p in policy(h, s, cbar).items() if p > 0)
            state = (state + GOLDEN) & MASK
            a = draw(state, dist)
            st = g.step(h, s, a)
            state = (state + GOLDEN) & MASK
            c = draw(state, sorted((v, p) for v, p in st.cost.joint_atoms().items() if p > 0))
            state = (state + GOLDEN) & MASK
            s = draw(state, sorted((s2, p) for s2, p in st.next.items() if p > 0))
            cbar = tuple(x + y for x, y in zip(cbar, c))
            for i in range(n):
                rets[r, i] += float(st.reward[i])
                t = int((cbar[i] - g.budget[i]) * L)
                if h == 1 or t > over[r, i]:
                    over[r, i] = t
    return RolloutStats(n_rollouts, seed, L, over, rets, tuple(Fraction(0) for _ in range(n)), 0, "reference")


# ---------------------------------------------------------------------------
# combined report


@dataclass
class CheckItem:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CheckReport:
    items: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.items.append(CheckItem(name, bool(passed), detail))

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [{"name": it.name, "passed": it.passed, "detail": it.detail} for it in self.items],
        }


@dataclass
class Tolerances:
    deviation: float = DEVIATION_TOL
    value: float = VALUE_TOL
    rollouts: int = 10_000
    seed: int = 0
    oracle_cap: int = DEFAULT_ORACLE_CAP


def check_solution(solution: AceSolution, tol: Tolerances | None = None, game: ConstrainedMarkovGame | None = None) -> CheckReport:
    """Support containment, value consistency, deviation gaps, rollouts and
    (for small instances) brute-force feasible sets."""
    tol = tol or Tolerances()
    rep = CheckReport()
    red, policy = solution.reduced, solution.policy

    support = policy.support_ok()
    rep.add("support", support, "" if support else "policy puts mass outside the allowed actions")
    if not support:
        return rep

    own = evaluate_policy(red, policy)
    err = max(
        (float(np.max(np.abs(own[h].astype(float) - solution.values[h].astype(float)))) for h in own if own[h].size),
        default=0.0,
    )
    rep.add("values", err <= tol.value, f"max |V_eval - V| = {err:.3g}")

    worst = 0.0
    for i in range(red.n_players):
        d = best_feasible_deviation(red, policy, i, solution.kind, values=solution.values)
        worst = max(worst, d.max_gap)
    rep.add("deviation", worst <= tol.deviation, f"max gap = {worst:.3g}")

    if tol.rollouts > 0:
        try:
            stats = simulate_rollouts(solution, tol.rollouts, tol.seed, game=game)
        except LeftFeasibleSetsError as exc:
            rep.add("rollouts", False, str(exc))
        except ValueError as exc:
            rep.add("rollouts", True, f"skipped: {exc}")
        else:
            ok = stats.violations == 0 and stats.sandwich_violations == 0
            over = ", ".join(str(x) for x in stats.max_overshoot)
            rep.add(
                "rollouts",
                ok,
                f"{stats.violations}/{stats.n_rollouts} violations, max overshoot [{over}], "
                f"{stats.sandwich_violations} sandwich failures",
            )

    if solution.feasible_sets is not None:
        try:
            ref = brute_force_feasible_sets(red.game, tol.oracle_cap)
        except OracleCapError as exc:
            rep.add("feasible-sets", True, f"skipped: {exc}")
        else:
            rep.add("feasible-sets", ref == solution.feasible_sets, "brute force vs search")
    return rep
