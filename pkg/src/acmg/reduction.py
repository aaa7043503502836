"""Reduced action-constrained game over augmented (state, cumulative cost) pairs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .game import ConstrainedMarkovGame, History, fraction_str
from .feasibility import FeasibleSets


class LeftFeasibleSetError(RuntimeError):
    """A lifted policy reached a (state, cost) pair outside the feasible sets."""


def is_product_set(allowed, sizes) -> bool:
    """Whether a set of flat joint-action indices is a Cartesian product."""
    projections = [set() for _ in sizes]
    for a in allowed:
        idx = a
        for i in range(len(sizes) - 1, -1, -1):
            idx, r = divmod(idx, sizes[i])
            projections[i].add(r)
    return len(set(allowed)) == math.prod(len(p) for p in projections)


@dataclass
class ActionConstrainedMG:
    """Augmented game. Index ``h`` runs over ``1..H`` (``H+1`` for terminal states).

    ``states[h]`` lists ``(s, cbar)`` with ``cbar`` on the integer lattice of
    scale ``scale``; ``allowed[h][k]`` holds the allowed joint actions of the
    k-th state; ``trans[h][k][a]`` is a list of ``(k', prob)`` into
    ``states[h+1]``; ``reward[h][k][a]`` the expected reward vector.
    """

    game: ConstrainedMarkovGame
    scale: int
    states: dict
    index: dict
    allowed: dict
    trans: dict
    reward: dict
    product: dict

    @property
    def horizon(self) -> int:
        return self.game.horizon

    @property
    def n_players(self) -> int:
        return self.game.n_players

    @property
    def action_sizes(self) -> tuple:
        return self.game.action_sizes

    @property
    def n_joint(self) -> int:
        return self.game.n_joint

    @property
    def initial(self) -> tuple:
        return self.states[1][0]

    def n_states(self, h: int) -> int:
        return len(self.states[h])

    def cost_fraction(self, cbar) -> tuple:
        return tuple(Fraction(c, self.scale) for c in cbar)

    def state_name(self, h: int, k: int) -> str:
        s, cbar = self.states[h][k]
        return f"({self.game.states[s]},[{','.join(fraction_str(c) for c in self.cost_fraction(cbar))}])"

    def non_product_states(self) -> list:
        return [(h, k) for h, flags in self.product.items() for k, f in enumerate(flags) if not f]


def build_reduced_game(g: ConstrainedMarkovGame, fs: FeasibleSets) -> ActionConstrainedMG:
    lam = fs.scale
    H = g.horizon
    states = {h: list(fs.fs[h]) for h in range(1, H + 2)}
    index = {h: {key: k for k, key in enumerate(states[h])} for h in states}
    allowed, trans, reward, product = {}, {}, {}, {}
    atoms_cache: dict = {}
    for h in range(1, H + 1):
        nxt_index = index[h + 1]
        allowed[h], trans[h], reward[h], product[h] = [], [], [], []
        for s, cbar in states[h]:
            acts = tuple(fs.fa[h][(s, cbar)])
            rows, rews = {}, {}
            for a in acts:
                st = g.step(h, s, a)
                key = (h, s, a)
                if key not in atoms_cache:
                    atoms_cache[key] = [
                        (tuple(int(v * lam) for v in vec), p)
                        for vec, p in sorted(st.cost.joint_atoms().items())
                        if p > 0
                    ]
                agg: dict = {}
                for vec, pc in atoms_cache[key]:
                    c2 = tuple(x + y for x, y in zip(cbar, vec))
                    for s2, ps in st.next.items():
                        if ps == 0:
                            continue
                        k2 = nxt_index.get((s2, c2))
                        if k2 is None:
                            raise AssertionError(f"outcome {(h + 1, s2, c2)} missing from feasible sets")
                        agg[k2] = agg.get(k2, Fraction(0)) + pc * ps
                rows[a] = sorted(agg.items())
                rews[a] = st.reward
            allowed[h].append(acts)
            trans[h].append(rows)
            reward[h].append(rews)
            product[h].append(is_product_set(acts, g.action_sizes))
    return ActionConstrainedMG(g, lam, states, index, allowed, trans, reward, product)


@dataclass
class AugmentedMarkovPolicy:
    """``dists[h][k]`` maps joint action -> probability at the k-th augmented state."""

    reduced: ActionConstrainedMG
    dists: dict

    def at(self, h: int, s: int, cbar) -> dict:
        k = self.reduced.index[h].get((s, cbar))
        if k is None:
            raise LeftFeasibleSetError(f"(h={h}, s={s}, cbar={cbar}) is not a feasible pair")
        return self.dists[h][k]

    def support_ok(self) -> bool:
        red = self.reduced
        for h in range(1, red.horizon + 1):
            for k, dist in enumerate(self.dists[h]):
                allowed = set(red.allowed[h][k])
                if any(p > 0 and a not in allowed for a, p in dist.items()):
                    return False
        return True


@dataclass(frozen=True)
class AugmentedHistory:
    """``((s1, 0), a1, (s2, cbar2), ..., (s_h, cbar_h))`` stored as two tuples."""

    pairs: tuple
    actions: tuple


def translate_history(tau: History, n_players: int) -> AugmentedHistory:
    cums = tau.cumulative_costs(n_players)
    return AugmentedHistory(tuple(zip(tau.states, cums)), tuple(tau.actions))


def untranslate_history(aug: AugmentedHistory) -> History:
    states = tuple(s for s, _ in aug.pairs)
    costs = tuple(
        tuple(y - x for x, y in zip(c0, c1))
        for (_, c0), (_, c1) in zip(aug.pairs, aug.pairs[1:])
    )
    return History(states, aug.actions, costs)


def lift_policy(policy: AugmentedMarkovPolicy):
    """History-dependent policy of the original game: ``tau -> pi(s_h, cbar_h)``."""
    red = policy.reduced
    n, lam = red.n_players, red.scale

    def lifted(tau: History) -> dict:
        cbar = tau.cumulative_costs(n)[-1]
        lattice = tuple(c * lam for c in cbar)
        if any(x.denominator != 1 for x in lattice):
            raise LeftFeasibleSetError(f"cumulative cost {cbar} is off the lattice")
        return policy.at(tau.time, tau.states[-1], tuple(int(x) for x in lattice))

    return lifted
