"""AND/OR feasibility structure over (time, state, cumulative cost) triples.

OR nodes are ``(h, s, cbar)`` and AND nodes ``(h, s, cbar, a)``. Identical OR
keys share one node, so the structure is a DAG rather than a tree. Cumulative
costs live on the integer lattice of the scaled game.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction

from .game import ConstrainedMarkovGame, JointCost, scale_costs

DEFAULT_MAX_NODES = 5_000_000


class SizeError(RuntimeError):
    """Feasibility structure exceeded the node cap."""


def max_nodes_from_env() -> int:
    raw = os.environ.get("ACE_MAX_NODES")
    return int(raw) if raw else DEFAULT_MAX_NODES


@dataclass(frozen=True)
class StepTable:
    """Integer view of one (h, s, a) entry: support only, no probabilities."""

    max_cost: tuple
    cost_vectors: tuple
    next_states: tuple


def _step_table(st) -> StepTable:
    atoms = st.cost.joint_atoms()
    vecs = sorted({tuple(int(v) for v in vec) for vec, p in atoms.items() if p > 0})
    if isinstance(st.cost, JointCost):
        top = tuple(max(v[i] for v in vecs) for i in range(len(vecs[0])))
    else:
        top = tuple(int(max(v for v, p in m.items() if p > 0)) for m in st.cost.marginals)
    nxt = tuple(sorted(s2 for s2, p in st.next.items() if p > 0))
    return StepTable(top, tuple(vecs), nxt)


def step_tables(g: ConstrainedMarkovGame) -> dict:
    """Support tables for a scaled game keyed by (h, s, a)."""
    return {key: _step_table(st) for key, st in g.dynamics.items()}


def is_feasible_action(g: ConstrainedMarkovGame, h: int, s: int, cbar, a: int, tables=None) -> bool:
    """True iff no supported cost of ``a`` pushes ``cbar`` over budget.

    ``cbar`` must be expressed in the units of ``g`` (scaled or not).
    """
    if tables is not None:
        top = tables[(h, s, a)].max_cost
    else:
        top = g.step(h, s, a).cost.max_cost()
    return all(c + m <= b for c, m, b in zip(cbar, top, g.budget))


@dataclass
class FeasibilityDag:
    horizon: int
    n_joint: int
    scale: int
    budget: tuple
    root: tuple
    # or_nodes[h] maps (s, cbar) -> list of feasible joint actions (AND children)
    or_nodes: list
    # and_children[(h, s, cbar, a)] -> tuple of (s', cbar') OR children at h+1
    and_children: dict
    or_label: dict = field(default_factory=dict)
    and_label: dict = field(default_factory=dict)
    labeled: bool = False

    @property
    def n_or(self) -> int:
        return sum(len(layer) for layer in self.or_nodes[1:])

    @property
    def n_and(self) -> int:
        return len(self.and_children)

    @property
    def n_edges(self) -> int:
        return self.n_and + sum(len(ch) for ch in self.and_children.values())

    def distinct_costs(self) -> set:
        """The distinct budget-respecting cumulative costs present (D_G)."""
        return {cbar for layer in self.or_nodes[1:] for (_, cbar) in layer}


def build_feasibility_dag(g: ConstrainedMarkovGame, max_nodes: int | None = None) -> FeasibilityDag:
    """Expand every OR node reachable from ``(1, s1, 0)`` by feasible actions."""
    if max_nodes is None:
        max_nodes = max_nodes_from_env()
    scale = g.cost_scale
    gs = scale_costs(g)
    budget = tuple(int(b) for b in gs.budget)
    tables = step_tables(gs)
    H, A, n = g.horizon, g.n_joint, g.n_players
    zero = (0,) * n
    or_nodes: list = [dict() for _ in range(H + 2)]
    or_nodes[1][(g.initial_state, zero)] = []
    and_children: dict = {}
    count = 1
    for h in range(1, H + 1):
        layer, nxt_layer = or_nodes[h], or_nodes[h + 1]
        for (s, cbar) in sorted(layer):
            acts = layer[(s, cbar)]
            for a in range(A):
                tab = tables[(h, s, a)]
                if any(c + m > b for c, m, b in zip(cbar, tab.max_cost, budget)):
                    continue
                kids = set()
                for vec in tab.cost_vectors:
                    c2 = tuple(x + y for x, y in zip(cbar, vec))
                    for s2 in tab.next_states:
                        kids.add((s2, c2))
                kids = tuple(sorted(kids))
                acts.append(a)
                and_children[(h, s, cbar, a)] = kids
                count += 1
                for k in kids:
                    if k not in nxt_layer:
                        nxt_layer[k] = []
                        count += 1
                if count > max_nodes:
                    raise SizeError(f"feasibility structure exceeds {max_nodes} nodes")
    return FeasibilityDag(H, A, scale, budget, (1, g.initial_state, zero), or_nodes, and_children)


def ao_solve(dag: FeasibilityDag) -> FeasibilityDag:
    """Label every node TRUE/FALSE in one reverse-time sweep (in place)."""
    H = dag.horizon
    or_label, and_label = dag.or_label, dag.and_label
    or_label.clear()
    and_label.clear()
    for key in dag.or_nodes[H + 1]:
        or_label[(H + 1,) + key] = True
    for h in range(H, 0, -1):
        for (s, cbar), acts in dag.or_nodes[h].items():
            any_true = False
            for a in acts:
                ok = all(or_label[(h + 1,) + k] for k in dag.and_children[(h, s, cbar, a)])
                and_label[(h, s, cbar, a)] = ok
                any_true = any_true or ok
            or_label[(h, s, cbar)] = any_true
    dag.labeled = True
    return dag


@dataclass
class FeasibleSets:
    """Feasible (state, cumulative cost) pairs and actions, on the integer lattice.

    ``fs[h]`` is a sorted list of ``(s, cbar)`` for ``h = 1..H+1``;
    ``fa[h][(s, cbar)]`` the sorted tuple of allowed joint actions for ``h <= H``.
    Divide lattice vectors by ``scale`` to recover original cost units.
    """

    horizon: int
    scale: int
    fs: dict
    fa: dict

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeasibleSets):
            return NotImplemented
        return self.as_fractions() == other.as_fractions()

    def as_fractions(self):
        def conv(c):
            return tuple(Fraction(x, self.scale) for x in c)

        fs = {h: frozenset((s, conv(c)) for s, c in v) for h, v in self.fs.items()}
        fa = {
            h: {(s, conv(c)): frozenset(acts) for (s, c), acts in d.items()}
            for h, d in self.fa.items()
        }
        return fs, fa

    def n_pairs(self, h: int) -> int:
        return len(self.fs[h])


def extract_feasible_sets(dag: FeasibilityDag) -> FeasibleSets | None:
    """Return the feasible sets, or ``None`` when the root is FALSE.

    Only nodes reachable from the root through TRUE AND nodes are kept: a TRUE
    node that hangs solely off a FALSE action is not feasibly realizable.
    """
    if not dag.labeled:
        ao_solve(dag)
    if not dag.or_label[dag.root]:
        return None
    H = dag.horizon
    fs: dict = {h: [] for h in range(1, H + 2)}
    fa: dict = {h: {} for h in range(1, H + 1)}
    frontier = {dag.root[1:]}
    for h in range(1, H + 1):
        nxt = set()
        for key in sorted(frontier):
            s, cbar = key
            acts = tuple(a for a in dag.or_nodes[h][key] if dag.and_label[(h, s, cbar, a)])
            fs[h].append(key)
            fa[h][key] = acts
            for a in acts:
                nxt.update(dag.and_children[(h, s, cbar, a)])
        frontier = nxt
    fs[H + 1] = sorted(frontier)
    return FeasibleSets(H, dag.scale, fs, fa)


def feasible_sets(g: ConstrainedMarkovGame, max_nodes: int | None = None):
    """Run the full feasibility pipeline; returns ``(dag, sets_or_None)``."""
    dag = ao_solve(build_feasibility_dag(g, max_nodes=max_nodes))
    return dag, extract_feasible_sets(dag)
