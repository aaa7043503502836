"""Cost rounding onto an ell-grid and the approximate solver built on it.

Every cost a player receives is rounded down to a multiple of ``ell`` and
clamped from below at the rounded truncation floor ``B - H * cmax``. Below
that floor a player can never run out of budget again, so the clamp is safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .equilibrium import AceSolution, solve_acmg
from .game import ConstrainedMarkovGame, JointCost, ProductCost, UniformCost, to_fraction
from .stage_lp import CCE

ADDITIVE = "additive"
RELATIVE = "relative"
MODES = (ADDITIVE, RELATIVE)

MAX_DENOMINATOR = 10**6


def round_down(c: Fraction, ell: Fraction) -> Fraction:
    """Largest integer multiple of ``ell`` that is ``<= c``."""
    if ell <= 0:
        raise ValueError("grid width must be positive")
    return math.floor(c / ell) * ell


def snap_down(x: Fraction, max_den: int = MAX_DENOMINATOR) -> Fraction:
    """A small-denominator rational ``<= x``; ``x`` itself when already small."""
    if x.denominator <= max_den:
        return x
    den = max_den
    while True:
        y = Fraction(math.floor(x * den), den)
        if y > 0:
            return y
        den *= 10


@dataclass(frozen=True)
class RoundingSpec:
    """Grid width per player. ``None`` marks a player whose width is undefined
    (relative mode with a zero budget); such a player must be exempt."""

    mode: str
    eps: Fraction
    ell: tuple

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if any(x is not None and x <= 0 for x in self.ell):
            raise ValueError("grid widths must be positive")

    def tolerance(self, budget) -> tuple:
        """Allowed overshoot per player: eps, or eps * |B_i| in relative mode."""
        if self.mode == ADDITIVE:
            return tuple(self.eps for _ in budget)
        return tuple(self.eps * abs(b) for b in budget)


def choose_ell(eps, mode: str, budget, horizon: int) -> RoundingSpec:
    eps = to_fraction(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if mode == ADDITIVE:
        ell = snap_down(eps / horizon)
        return RoundingSpec(mode, eps, tuple(ell for _ in budget))
    if mode == RELATIVE:
        widths = []
        for b in budget:
            b = to_fraction(b)
            widths.append(snap_down(eps * abs(b) / horizon) if b != 0 else None)
        return RoundingSpec(mode, eps, tuple(widths))
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class CostRounder:
    """Per-player map from true immediate cost to the approximate game's cost."""

    ell: tuple
    floor: tuple  # rounded truncation floor, None if exempt
    exempt: tuple

    def __call__(self, i: int, c: Fraction) -> Fraction:
        if self.exempt[i]:
            return Fraction(0)
        return max(round_down(c, self.ell[i]), self.floor[i])

    def vector(self, c) -> tuple:
        return tuple(self(i, x) for i, x in enumerate(c))


def exempt_players(g: ConstrainedMarkovGame) -> tuple:
    """Players whose constraint no policy can violate."""
    cmax = g.max_cost()
    return tuple(max(c, g.horizon * c) <= b for c, b in zip(cmax, g.budget))


def make_rounder(g: ConstrainedMarkovGame, spec: RoundingSpec) -> CostRounder:
    cmax = g.max_cost()
    exempt = exempt_players(g)
    floors = []
    for i, (c, b, ex) in enumerate(zip(cmax, g.budget, exempt)):
        if ex:
            floors.append(None)
            continue
        if c <= 0:
            raise ValueError(f"player {i}: non-positive maximum cost with budget {b} below it")
        if spec.ell[i] is None:
            raise ValueError(f"player {i}: relative mode needs a nonzero budget")
        floors.append(round_down(b - g.horizon * c, spec.ell[i]))
    return CostRounder(spec.ell, tuple(floors), exempt)


def _round_marginal(m, i: int, rnd: CostRounder) -> dict:
    if rnd.exempt[i]:
        return {Fraction(0): Fraction(1)}
    out: dict = {}
    if isinstance(m, UniformCost):
        ell = rnd.ell[i]
        lo = rnd(i, m.lo)
        top = round_down(m.hi, ell)
        t = lo
        while t <= top:
            # the lowest atom also takes everything below it
            p = m.cdf(t + ell) - (0 if t == lo else m.cdf(t))
            if p:
                out[t] = p
            t += ell
        return out
    for v, p in m.items():
        r = rnd(i, v)
        out[r] = out.get(r, Fraction(0)) + p
    return {v: p for v, p in out.items() if p}


def build_approx_game(g: ConstrainedMarkovGame, spec: RoundingSpec) -> ConstrainedMarkovGame:
    """Round every cost distribution onto the grid; rewards and dynamics are kept."""
    rnd = make_rounder(g, spec)
    dyn = {}
    for key, st in g.dynamics.items():
        cost = st.cost
        if isinstance(cost, JointCost):
            cost = cost.as_product()
            if cost is None:
                raise ValueError(f"{key}: joint cost does not factorize across players")
        margs = tuple(_round_marginal(m, i, rnd) for i, m in enumerate(cost.marginals))
        dyn[key] = replace(st, cost=ProductCost(margs))
    budget = tuple(
        max(b, Fraction(0)) if ex else round_down(b, ell)
        for b, ell, ex in zip(g.budget, spec.ell, rnd.exempt)
    )
    return replace(g, budget=budget, dynamics=dyn)


def atom_count_bound(g: ConstrainedMarkovGame, spec: RoundingSpec) -> list:
    """Per-player cap on rounded atoms: ``(cmax (H+1) - B) / ell + 2``."""
    cmax = g.max_cost()
    out = []
    for c, b, ell, ex in zip(cmax, g.budget, spec.ell, exempt_players(g)):
        out.append(1 if ex else (c * (g.horizon + 1) - b) / ell + 2)
    return out


def atom_counts(g: ConstrainedMarkovGame) -> list:
    """Largest per-player support size over all cost distributions of ``g``."""
    out = [0] * g.n_players
    for st in g.dynamics.values():
        for i, m in enumerate(st.cost.marginals):
            out[i] = max(out[i], len(m))
    return out


def approx_solve(
    g: ConstrainedMarkovGame,
    eps,
    mode: str = ADDITIVE,
    kind: str = CCE,
    exact: bool = False,
    max_nodes: int | None = None,
) -> AceSolution | None:
    """Solve the rounded game. ``None`` means no approximately feasible policy exists."""
    spec = choose_ell(eps, mode, g.budget, g.horizon)
    g_hat = build_approx_game(g, spec)
    sol = solve_acmg(g_hat, kind, exact=exact, max_nodes=max_nodes)
    if sol is None:
        return None
    tol = spec.tolerance(g.budget)
    sol.rounding = spec
    sol.source = g
    sol.metadata.update(
        mode=mode,
        eps=spec.eps,
        ell=list(spec.ell),
        exempt=list(exempt_players(g)),
        atom_counts=atom_counts(g_hat),
        atom_bound=atom_count_bound(g, spec),
        guarantee=[b + t for b, t in zip(g.budget, tol)],
    )
    return sol
