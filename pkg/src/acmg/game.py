"""Constrained Markov game model: parsing, validation and fixed-point scaling.

All probabilities, costs and budgets are kept as :class:`fractions.Fraction`
so that cumulative costs can be used as exact dictionary keys. Rewards are
stored as their means, which is all the solvers ever need.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

DEFAULT_MAX_LATTICE = 2**31


class GameSchemaError(ValueError):
    """Malformed game document or violated model invariant."""


class PrecisionError(ValueError):
    """Exact cost lattice would be too large for exact solving."""


def to_fraction(x) -> Fraction:
    """Parse an int, decimal, Fraction or ``"p/q"`` string exactly."""
    if isinstance(x, bool):
        raise GameSchemaError(f"expected a number, got {x!r}")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        # repr round-trips the literal the user most likely typed
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise GameSchemaError(f"bad rational {x!r}") from exc
    raise GameSchemaError(f"expected a number, got {x!r}")


def fraction_str(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ---------------------------------------------------------------------------
# cost distributions


@dataclass(frozen=True)
class UniformCost:
    """Continuous uniform cost on ``[lo, hi]``; only usable in approximation mode."""

    lo: Fraction
    hi: Fraction

    def cdf(self, x: Fraction) -> Fraction:
        if x <= self.lo:
            return Fraction(0)
        if x >= self.hi:
            return Fraction(1)
        return (x - self.lo) / (self.hi - self.lo)

    def prob_interval(self, a, b) -> Fraction:
        """Mass of ``[a, b)``; ``a=None`` means minus infinity."""
        lower = Fraction(0) if a is None else self.cdf(a)
        return self.cdf(b) - lower

    @property
    def sup(self) -> Fraction:
        return self.hi


Marginal = "dict[Fraction, Fraction] | UniformCost"


@dataclass(frozen=True)
class ProductCost:
    """Independent per-player cost marginals."""

    marginals: tuple

    @property
    def is_finite(self) -> bool:
        return all(isinstance(m, dict) for m in self.marginals)

    def joint_atoms(self) -> dict[tuple, Fraction]:
        if not self.is_finite:
            raise PrecisionError("continuous cost has no finite atoms")
        out: dict[tuple, Fraction] = {}
        for combo in itertools.product(*(sorted(m.items()) for m in self.marginals)):
            vec = tuple(v for v, _ in combo)
            p = Fraction(1)
            for _, q in combo:
                p *= q
            out[vec] = out.get(vec, Fraction(0)) + p
        return out

    def max_cost(self) -> tuple:
        return tuple(m.sup if isinstance(m, UniformCost) else max(m) for m in self.marginals)

    def support_values(self) -> Iterable[Fraction]:
        for m in self.marginals:
            if isinstance(m, dict):
                yield from m.keys()


@dataclass(frozen=True)
class JointCost:
    """Explicit vector-valued cost atoms (possibly correlated across players)."""

    atoms: Mapping

    is_finite = True

    def joint_atoms(self) -> dict[tuple, Fraction]:
        return dict(self.atoms)

    def max_cost(self) -> tuple:
        n = len(next(iter(self.atoms)))
        return tuple(max(v[i] for v in self.atoms) for i in range(n))

    def support_values(self) -> Iterable[Fraction]:
        for vec in self.atoms:
            yield from vec

    def as_product(self) -> ProductCost | None:
        """Return the equivalent product form if the atoms factorize exactly."""
        n = len(next(iter(self.atoms)))
        margs = [dict() for _ in range(n)]
        for vec, p in self.atoms.items():
            for i, v in enumerate(vec):
                margs[i][v] = margs[i].get(v, Fraction(0)) + p
        prod = ProductCost(tuple(margs))
        joint = prod.joint_atoms()
        if joint.keys() == {k for k, v in self.atoms.items() if v} and all(
            joint[k] == self.atoms[k] for k in joint
        ):
            return prod
        return None


@dataclass(frozen=True)
class Step:
    """Model data for one (time, state, joint action) triple."""

    next: Mapping  # state index -> probability
    reward: tuple
    cost: ProductCost | JointCost


# ---------------------------------------------------------------------------
# the game


@dataclass(frozen=True, eq=True)
class ConstrainedMarkovGame:
    states: tuple
    initial_state: int
    actions: tuple  # per-player tuple of action names
    horizon: int
    budget: tuple
    dynamics: Mapping = field(repr=False)  # (h, s, joint index) -> Step

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_players(self) -> int:
        return len(self.actions)

    @cached_property
    def action_sizes(self) -> tuple:
        return tuple(len(a) for a in self.actions)

    @cached_property
    def n_joint(self) -> int:
        return math.prod(self.action_sizes)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def joint_actions(self) -> list:
        return list(itertools.product(*(range(k) for k in self.action_sizes)))

    def joint_index(self, a: Sequence[int]) -> int:
        idx = 0
        for ai, k in zip(a, self.action_sizes):
            idx = idx * k + ai
        return idx

    def joint_tuple(self, idx: int) -> tuple:
        out = []
        for k in reversed(self.action_sizes):
            idx, r = divmod(idx, k)
            out.append(r)
        return tuple(reversed(out))

    def joint_names(self, idx: int) -> list:
        return [self.actions[i][ai] for i, ai in enumerate(self.joint_tuple(idx))]

    def step(self, h: int, s: int, a: int) -> Step:
        return self.dynamics[(h, s, a)]

    @property
    def has_continuous_costs(self) -> bool:
        return any(not st.cost.is_finite for st in self.dynamics.values())

    @property
    def has_joint_costs(self) -> bool:
        return any(isinstance(st.cost, JointCost) for st in self.dynamics.values())

    @cached_property
    def cost_scale(self) -> int:
        """Smallest integer Lambda making every finite cost atom and budget integral."""
        lam = 1
        for b in self.budget:
            lam = math.lcm(lam, b.denominator)
        for st in self.dynamics.values():
            for v in st.cost.support_values():
                lam = math.lcm(lam, v.denominator)
        return lam

    def max_cost(self) -> tuple:
        """Per-player supremum of supported immediate costs over all (h, s, a)."""
        out = None
        for st in self.dynamics.values():
            m = st.cost.max_cost()
            out = m if out is None else tuple(max(x, y) for x, y in zip(out, m))
        return out

    def max_abs_reward(self) -> Fraction:
        return max((abs(r) for st in self.dynamics.values() for r in st.reward), default=Fraction(0))


def cost_precision_bits(g: ConstrainedMarkovGame) -> int:
    """Bits needed for the largest scaled immediate cost magnitude."""
    lam = g.cost_scale
    bits = 0
    for st in g.dynamics.values():
        for v in st.cost.support_values():
            bits = max(bits, abs(int(v * lam)).bit_length())
    return bits


def lattice_extent(g: ConstrainedMarkovGame) -> int:
    lam = g.cost_scale
    top = max((abs(v) for st in g.dynamics.values() for v in st.cost.support_values()), default=0)
    return int(lam * top * g.horizon)


# ---------------------------------------------------------------------------
# validation


@dataclass
class Violation:
    location: str
    description: str

    def __str__(self) -> str:
        return f"{self.location}: {self.description}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, location: str, description: str) -> None:
        self.violations.append(Violation(location, description))


def _check_dist(report, loc, dist, what):
    if not dist:
        report.add(loc, f"{what} has empty support")
        return
    for k, p in dist.items():
        if p < 0:
            report.add(loc, f"{what} has negative probability {p} at {k}")
    total = sum(dist.values(), Fraction(0))
    if total != 1:
        report.add(loc, f"{what} sums to {total}, not 1")


def validate_game(g: ConstrainedMarkovGame, scale: int | None = None) -> ValidationReport:
    """Collect every invariant violation of ``g`` (never raises).

    ``scale`` is the fixed-point scale the game claims; by default the game's
    own computed scale is used, which makes the precision check vacuous for
    finite atoms.
    """
    rep = ValidationReport()
    n = g.n_players
    if n < 1:
        rep.add("players", "need at least one player")
    if g.horizon < 1:
        rep.add("horizon", f"horizon must be >= 1, got {g.horizon}")
    if not g.states:
        rep.add("states", "no states")
    if not 0 <= g.initial_state < len(g.states):
        rep.add("initial_state", f"index {g.initial_state} out of range")
    if len(set(g.states)) != len(g.states):
        rep.add("states", "duplicate state names")
    for i, acts in enumerate(g.actions):
        if not acts:
            rep.add(f"actions[{i}]", "empty action set")
    if len(g.budget) != n:
        rep.add("budget", f"length {len(g.budget)} != players {n}")
    lam = g.cost_scale if scale is None else scale
    for i, b in enumerate(g.budget):
        if (b * lam).denominator != 1:
            rep.add(f"budget[{i}]", f"{b} is not a multiple of 1/{lam}")
    for h in range(1, g.horizon + 1):
        for s in range(len(g.states)):
            for a in range(g.n_joint):
                loc = f"(h={h}, s={g.states[s] if s < len(g.states) else s}, a={a})"
                st = g.dynamics.get((h, s, a))
                if st is None:
                    rep.add(loc, "missing dynamics entry")
                    continue
                for s2 in st.next:
                    if not 0 <= s2 < len(g.states):
                        rep.add(loc, f"next state index {s2} out of range")
                _check_dist(rep, loc, st.next, "transition")
                if len(st.reward) != n:
                    rep.add(loc, f"reward has length {len(st.reward)} != {n}")
                cost = st.cost
                if isinstance(cost, JointCost):
                    _check_dist(rep, loc, cost.atoms, "joint cost")
                    for vec in cost.atoms:
                        if len(vec) != n:
                            rep.add(loc, f"cost vector {vec} has wrong length")
                else:
                    if len(cost.marginals) != n:
                        rep.add(loc, f"cost has {len(cost.marginals)} marginals != {n}")
                    for i, m in enumerate(cost.marginals):
                        if isinstance(m, UniformCost):
                            if not m.lo < m.hi:
                                rep.add(loc, f"uniform cost of player {i} has empty interval")
                        else:
                            _check_dist(rep, loc, m, f"cost of player {i}")
                for v in cost.support_values():
                    if (v * lam).denominator != 1:
                        rep.add(loc, f"cost {v} is not a multiple of 1/{lam}")
    for key in g.dynamics:
        h, s, a = key
        if not (1 <= h <= g.horizon and 0 <= s < len(g.states) and 0 <= a < g.n_joint):
            rep.add(f"{key}", "dynamics entry index out of range")
    return rep


def scale_costs(g: ConstrainedMarkovGame) -> ConstrainedMarkovGame:
    """Multiply all costs and budgets by the game's scale so they become integers."""
    lam = g.cost_scale
    if lam == 1:
        return g

    def scale_marg(m):
        if isinstance(m, UniformCost):
            return UniformCost(m.lo * lam, m.hi * lam)
        return {v * lam: p for v, p in m.items()}

    dyn = {}
    for key, st in g.dynamics.items():
        if isinstance(st.cost, JointCost):
            cost = JointCost({tuple(v * lam for v in vec): p for vec, p in st.cost.atoms.items()})
        else:
            cost = ProductCost(tuple(scale_marg(m) for m in st.cost.marginals))
        dyn[key] = replace(st, cost=cost)
    return replace(g, budget=tuple(b * lam for b in g.budget), dynamics=dyn)


# ---------------------------------------------------------------------------
# JSON documents


def _index(names: Sequence[str], x, what: str) -> int:
    if isinstance(x, int) and not isinstance(x, bool):
        if not 0 <= x < len(names):
            raise GameSchemaError(f"{what} index {x} out of range")
        return x
    try:
        return list(names).index(x)
    except ValueError:
        raise GameSchemaError(f"unknown {what} {x!r}") from None


def _parse_atoms(raw, loc) -> dict:
    if not isinstance(raw, list) or not raw:
        raise GameSchemaError(f"{loc}: expected a nonempty list of atoms")
    out: dict = {}
    for atom in raw:
        try:
            v, p = to_fraction(atom["value"]), to_fraction(atom["prob"])
        except (KeyError, TypeError) as exc:
            raise GameSchemaError(f"{loc}: atom needs value and prob") from exc
        out[v] = out.get(v, Fraction(0)) + p
    # support means positive mass
    return {v: p for v, p in out.items() if p != 0} or out


def _parse_marginal(raw, loc):
    if isinstance(raw, dict):
        if "uniform" in raw:
            lo, hi = raw["uniform"]
            return UniformCost(to_fraction(lo), to_fraction(hi))
        if "atoms" in raw:
            return _parse_atoms(raw["atoms"], loc)
        raise GameSchemaError(f"{loc}: unknown cost form {sorted(raw)}")
    if isinstance(raw, list):
        return _parse_atoms(raw, loc)
    return {to_fraction(raw): Fraction(1)}


def _parse_reward(raw, loc) -> Fraction:
    if isinstance(raw, list):
        atoms = _parse_atoms(raw, loc)
        return sum((v * p for v, p in atoms.items()), Fraction(0))
    return to_fraction(raw)


def game_from_dict(doc: dict, max_lattice: int | None = DEFAULT_MAX_LATTICE) -> ConstrainedMarkovGame:
    if not isinstance(doc, dict):
        raise GameSchemaError("game document must be a JSON object")
    try:
        n = doc["players"]
        states = tuple(str(s) for s in doc["states"])
        horizon = doc["horizon"]
        actions = tuple(tuple(str(x) for x in acts) for acts in doc["actions"])
        budget = tuple(to_fraction(b) for b in doc["budget"])
        entries = doc["dynamics"]
        init_raw = doc["initial_state"]
    except KeyError as exc:
        raise GameSchemaError(f"missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise GameSchemaError(str(exc)) from None
    if not isinstance(n, int) or n < 1 or len(actions) != n:
        raise GameSchemaError("players must equal the number of action lists")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        raise GameSchemaError(f"horizon must be an integer >= 1, got {horizon!r}")
    init = _index(states, init_raw, "state")
    sizes = tuple(len(a) for a in actions)

    dyn: dict = {}
    explicit: set = set()
    for k, e in enumerate(entries):
        loc = f"dynamics[{k}]"
        try:
            s = _index(states, e["s"], "state")
            a_raw = e["a"]
            if len(a_raw) != n:
                raise GameSchemaError(f"{loc}: joint action needs {n} components")
            a = 0
            for i, x in enumerate(a_raw):
                a = a * sizes[i] + _index(actions[i], x, f"action of player {i}")
            nxt: dict = {}
            for name, p in e["next"].items():
                s2 = _index(states, name, "state")
                nxt[s2] = nxt.get(s2, Fraction(0)) + to_fraction(p)
            nxt = {s2: p for s2, p in nxt.items() if p != 0} or nxt
            reward = tuple(_parse_reward(r, loc) for r in e.get("reward", [0] * n))
            if "cost_joint" in e:
                atoms: dict = {}
                for atom in e["cost_joint"]:
                    vec = tuple(to_fraction(v) for v in atom["value"])
                    atoms[vec] = atoms.get(vec, Fraction(0)) + to_fraction(atom["prob"])
                cost = JointCost({v: p for v, p in atoms.items() if p != 0} or atoms)
            else:
                raw = e.get("cost", [0] * n)
                if len(raw) != n:
                    raise GameSchemaError(f"{loc}: cost needs {n} per-player entries")
                cost = ProductCost(tuple(_parse_marginal(m, loc) for m in raw))
        except KeyError as exc:
            raise GameSchemaError(f"{loc}: missing field {exc.args[0]!r}") from None
        except (TypeError, AttributeError) as exc:
            raise GameSchemaError(f"{loc}: {exc}") from None
        st = Step(nxt, reward, cost)
        hs = [e["h"]] if "h" in e else range(1, horizon + 1)
        for h in hs:
            if not isinstance(h, int) or not 1 <= h <= horizon:
                raise GameSchemaError(f"{loc}: time {h!r} outside 1..{horizon}")
            key = (h, s, a)
            if "h" in e:
                if key in explicit:
                    raise GameSchemaError(f"{loc}: duplicate entry for {key}")
                explicit.add(key)
                dyn[key] = st
            elif key not in explicit:
                dyn[key] = st

    g = ConstrainedMarkovGame(states, init, actions, horizon, budget, dyn)
    rep = validate_game(g)
    if not rep.valid:
        raise GameSchemaError("; ".join(str(v) for v in rep.violations[:10]))
    if max_lattice is not None and lattice_extent(g) > max_lattice:
        raise PrecisionError(
            f"exact cost lattice extent {lattice_extent(g)} exceeds cap {max_lattice}; "
            "use approximation mode"
        )
    return g


def parse_game(text: str, max_lattice: int | None = DEFAULT_MAX_LATTICE) -> ConstrainedMarkovGame:
    """Parse a JSON game document. Decimal literals are read exactly."""
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise GameSchemaError(f"invalid JSON: {exc}") from None
    return game_from_dict(doc, max_lattice=max_lattice)


def load_game(path, max_lattice: int | None = DEFAULT_MAX_LATTICE) -> ConstrainedMarkovGame:
    with open(path, encoding="utf-8") as fh:
        return parse_game(fh.read(), max_lattice=max_lattice)


def _marginal_doc(m):
    if isinstance(m, UniformCost):
        return {"uniform": [fraction_str(m.lo), fraction_str(m.hi)]}
    return [{"value": fraction_str(v), "prob": fraction_str(p)} for v, p in sorted(m.items())]


def game_to_dict(g: ConstrainedMarkovGame) -> dict:
    entries = []
    for (h, s, a), st in sorted(g.dynamics.items()):
        e = {
            "h": h,
            "s": g.states[s],
            "a": g.joint_names(a),
            "next": {g.states[s2]: fraction_str(p) for s2, p in sorted(st.next.items())},
            "reward": [fraction_str(r) for r in st.reward],
        }
        if isinstance(st.cost, JointCost):
            e["cost_joint"] = [
                {"value": [fraction_str(v) for v in vec], "prob": fraction_str(p)}
                for vec, p in sorted(st.cost.atoms.items())
            ]
        else:
            e["cost"] = [_marginal_doc(m) for m in st.cost.marginals]
        entries.append(e)
    return {
        "players": g.n_players,
        "states": list(g.states),
        "initial_state": g.states[g.initial_state],
        "horizon": g.horizon,
        "budget": [fraction_str(b) for b in g.budget],
        "actions": [list(a) for a in g.actions],
        "dynamics": entries,
    }


def serialize_game(g: ConstrainedMarkovGame) -> str:
    return json.dumps(game_to_dict(g), indent=1)


# ---------------------------------------------------------------------------
# histories


@dataclass(frozen=True)
class History:
    """Observed history ``(s1, a1, c1, s2, ..., s_h)``.

    ``costs`` holds realized cost vectors; ``actions`` joint-action indices.
    """

    states: tuple
    actions: tuple = ()
    costs: tuple = ()

    def __post_init__(self):
        if not (len(self.states) == len(self.actions) + 1 == len(self.costs) + 1):
            raise ValueError("history lengths inconsistent")

    @property
    def time(self) -> int:
        return len(self.states)

    def cumulative_costs(self, n: int) -> list:
        """``[cbar_1, ..., cbar_h]`` with ``cbar_1 = 0``."""
        acc = tuple(Fraction(0) for _ in range(n))
        out = [acc]
        for c in self.costs:
            acc = tuple(x + y for x, y in zip(acc, c))
            out.append(acc)
        return out
