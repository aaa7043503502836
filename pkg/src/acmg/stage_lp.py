"""Constrained (coarse-)correlated equilibria of action-constrained matrix games.

The feasibility program has one variable per allowed joint action, deviation
rows ``G sigma >= 0``, and ``sum(sigma) = 1``. It is solved with a phase-1
simplex using Bland's rule, so identical inputs give identical outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import _kernels

LP_TOL = 1e-9
PIVOT_TOL = 1e-11
ZERO_MASS = 1e-12
MAX_PIVOTS = 100_000

CCE = "cce"
CE = "ce"
KINDS = (CCE, CE)


class NoSolutionError(RuntimeError):
    """The constrained equilibrium program has no solution (only when X is empty)."""


@dataclass
class ActionConstrainedMatrixGame:
    """Joint action space ``prod(action_sizes)``, allowed set ``allowed``.

    ``utilities`` has shape ``(n, |A|)``; columns outside ``allowed`` are
    ignored until sanitized. Object arrays of Fractions give exact games.
    """

    action_sizes: tuple
    allowed: tuple
    utilities: np.ndarray

    @property
    def n_players(self) -> int:
        return len(self.action_sizes)

    @property
    def n_joint(self) -> int:
        return math.prod(self.action_sizes)

    @property
    def exact(self) -> bool:
        return self.utilities.dtype == object


@dataclass
class JointDistribution:
    action_sizes: tuple
    probs: dict  # flat joint action -> probability (support only)

    @property
    def support(self) -> tuple:
        return tuple(sorted(a for a, p in self.probs.items() if p > 0))

    def array(self) -> np.ndarray:
        out = np.zeros(math.prod(self.action_sizes))
        for a, p in self.probs.items():
            out[a] = float(p)
        return out


@dataclass
class ClpSystem:
    """Rows ``G @ sigma >= 0`` over ``variables``; ``rows`` labels each row."""

    kind: str
    variables: tuple
    G: np.ndarray
    rows: list
    action_sizes: tuple


@lru_cache(maxsize=256)
def deviation_index(sizes: tuple) -> np.ndarray:
    """``dev[i, b, a]`` = flat index of ``a`` with player i's component set to ``b``."""
    n_joint = math.prod(sizes)
    coords = np.array(np.unravel_index(np.arange(n_joint), sizes))
    dev = np.zeros((len(sizes), max(sizes), n_joint), dtype=np.int64)
    for i, k in enumerate(sizes):
        for b in range(k):
            c = coords.copy()
            c[i] = b
            dev[i, b] = np.ravel_multi_index(tuple(c), sizes)
    return dev


@lru_cache(maxsize=256)
def joint_coords(sizes: tuple) -> np.ndarray:
    return np.array(np.unravel_index(np.arange(math.prod(sizes)), sizes))


def sanitize_utilities(game: ActionConstrainedMatrixGame) -> ActionConstrainedMatrixGame:
    """Replace utilities outside the allowed set by ``min - 1 - range`` per player."""
    if not game.allowed:
        raise NoSolutionError("empty allowed set")
    X = np.array(game.allowed, dtype=np.int64)
    mask = np.ones(game.n_joint, dtype=bool)
    mask[X] = False
    u = game.utilities.copy()
    for i in range(game.n_players):
        vals = u[i, X]
        lo, hi = min(vals), max(vals)
        u[i, mask] = lo - 1 - (hi - lo)
    return ActionConstrainedMatrixGame(game.action_sizes, game.allowed, u)


def build_clp(game: ActionConstrainedMatrixGame, kind: str = CCE) -> ClpSystem:
    """Deviation rows of the constrained CCE or CE program (utilities sanitized)."""
    sizes = game.action_sizes
    X = np.array(game.allowed, dtype=np.int64)
    u = game.utilities
    dev = deviation_index(sizes)
    blocks, labels = [], []
    if kind == CCE:
        for i, k in enumerate(sizes):
            base = u[i, X]
            for b in range(k):
                blocks.append(base - u[i, dev[i, b, X]])
                labels.append((i, b))
    elif kind == CE:
        coords = joint_coords(sizes)
        for i, k in enumerate(sizes):
            base = u[i, X]
            own = coords[i, X]
            for ai in range(k):
                sel = own == ai
                for b in range(k):
                    if b == ai:
                        continue
                    row = base - u[i, dev[i, b, X]]
                    row = np.where(sel, row, 0 if game.exact else 0.0)
                    blocks.append(row)
                    labels.append((i, ai, b))
    else:
        raise ValueError(f"unknown equilibrium kind {kind!r}")
    dtype = object if game.exact else float
    G = np.array(blocks, dtype=dtype).reshape(len(blocks), len(X))
    return ClpSystem(kind, tuple(game.allowed), G, labels, sizes)


def _renormalize(x: dict, exact: bool) -> dict:
    if exact:
        total = sum(x.values(), Fraction(0))
        return {a: x[a] / total for a in sorted(x) if x[a] > 0}
    x = {a: p for a, p in x.items() if p > ZERO_MASS}
    total = math.fsum(x.values())
    x = {a: p / total for a, p in x.items()}
    top = max(x, key=lambda a: (x[a], -a))
    x[top] = 1.0 - math.fsum(p for a, p in x.items() if a != top)
    return dict(sorted(x.items()))


def solve_feasibility(system: ClpSystem, exact: bool | None = None) -> JointDistribution:
    """Find a distribution over the allowed actions satisfying every row."""
    k = len(system.variables)
    if k == 0:
        raise NoSolutionError("empty allowed set")
    if exact is None:
        exact = system.G.dtype == object
    if k == 1:
        one = Fraction(1) if exact else 1.0
        return JointDistribution(system.action_sizes, {system.variables[0]: one})
    m = system.G.shape[0]
    ncols = k + m + 1
    if exact:
        zero, one = Fraction(0), Fraction(1)
        T = [[zero] * (ncols + 1) for _ in range(m + 2)]
        for j in range(k):
            T[0][j] = -one
        T[0][ncols] = -one
        for r in range(m):
            row = T[r + 1]
            for j in range(k):
                row[j] = -Fraction(system.G[r, j])
            row[k + r] = one
        last = T[m + 1]
        for j in range(k):
            last[j] = one
        last[ncols - 1] = one
        last[ncols] = one
        basis = [k + r for r in range(m)] + [ncols - 1]
        it = _kernels.fallback.phase1(T, basis, 0, MAX_PIVOTS)
        residual = -T[0][ncols]
        rhs = [T[r + 1][ncols] for r in range(m + 1)]
    else:
        T = np.zeros((m + 2, ncols + 1))
        T[0, :k] = -1.0
        T[0, ncols] = -1.0
        T[1 : m + 1, :k] = -system.G.astype(float)
        T[1 : m + 1, k : k + m] = np.eye(m)
        T[m + 1, :k] = 1.0
        T[m + 1, ncols - 1] = 1.0
        T[m + 1, ncols] = 1.0
        basis = np.array([k + r for r in range(m)] + [ncols - 1], dtype=np.int64)
        it = _kernels.phase1_float(T, basis, PIVOT_TOL, MAX_PIVOTS)
        residual = -T[0, ncols]
        rhs = T[1:, ncols].tolist()
        basis = basis.tolist()
    if it < 0:
        raise NoSolutionError(f"simplex failed (status {it})")
    if residual > (0 if exact else LP_TOL):
        raise NoSolutionError(f"program infeasible (residual {float(residual):.3g})")
    x = {}
    for r, col in enumerate(basis):
        if col < k:
            x[system.variables[col]] = rhs[r]
    if not any(p > 0 for p in x.values()):
        raise NoSolutionError("degenerate basis carries no mass")
    return JointDistribution(system.action_sizes, _renormalize(x, exact))


def solve_matrix_game(game: ActionConstrainedMatrixGame, kind: str = CCE) -> JointDistribution:
    """Sanitize, build and solve in one call."""
    return solve_feasibility(build_clp(sanitize_utilities(game), kind), exact=game.exact)
