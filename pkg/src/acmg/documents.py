"""JSON documents for solutions, reduced games, feasible sets and matrix games.

Exact quantities are written as ``"p/q"`` strings; floating-point ones as
JSON numbers. Every ``*_to_dict`` has a matching ``*_from_dict`` and the pair
round-trips.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction

import numpy as np

from .approximation import RoundingSpec, build_approx_game
from .equilibrium import AceSolution
from .feasibility import FeasibleSets, feasible_sets
from .game import ConstrainedMarkovGame, GameSchemaError, fraction_str, game_from_dict, game_to_dict, to_fraction
from .reduction import ActionConstrainedMG, AugmentedMarkovPolicy, build_reduced_game
from .stage_lp import ActionConstrainedMatrixGame, JointDistribution


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def _num(x):
    if isinstance(x, Fraction):
        return fraction_str(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return x


def _parse_num(x, exact: bool):
    return to_fraction(x) if exact else float(x)


def json_safe(obj):
    """Recursively convert Fractions, numpy scalars and tuples for JSON."""
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return _num(obj)


def _cost_doc(cbar, scale: int) -> list:
    return [fraction_str(Fraction(c, scale)) for c in cbar]


def _cost_key(raw, scale: int) -> tuple:
    out = []
    for x in raw:
        v = to_fraction(x) * scale
        if v.denominator != 1:
            raise GameSchemaError(f"cost {x} is off the lattice 1/{scale}")
        out.append(int(v))
    return tuple(out)


def _state_index(g: ConstrainedMarkovGame, name) -> int:
    try:
        return g.states.index(name)
    except ValueError:
        raise GameSchemaError(f"unknown state {name!r}") from None


def _joint_from_names(g: ConstrainedMarkovGame, names) -> int:
    if len(names) != g.n_players:
        raise GameSchemaError(f"joint action {names} has wrong length")
    try:
        return g.joint_index([g.actions[i].index(x) for i, x in enumerate(names)])
    except ValueError:
        raise GameSchemaError(f"unknown joint action {names}") from None


# ---------------------------------------------------------------------------
# solutions


def solution_to_dict(sol: AceSolution) -> dict:
    red = sol.reduced
    g = red.game
    H = red.horizon
    policy, values = [], []
    for h in range(1, H + 2):
        for k, (s, cbar) in enumerate(red.states[h]):
            head = {"h": h, "state": g.states[s], "cost": _cost_doc(cbar, red.scale)}
            if h <= H:
                dist = [{"a": g.joint_names(a), "p": _num(p)} for a, p in sorted(sol.policy.dists[h][k].items())]
                policy.append({**head, "dist": dist})
            values.append({**head, "v": [_num(sol.values[h][i, k]) for i in range(red.n_players)]})
    approx = None
    if sol.rounding is not None:
        spec = sol.rounding
        approx = {
            "mode": spec.mode,
            "eps": fraction_str(spec.eps),
            "ell": [None if x is None else fraction_str(x) for x in spec.ell],
        }
    return {
        "format": "acmg-solution",
        "kind": sol.kind,
        "exact": sol.exact,
        "approximation": approx,
        "policy": policy,
        "values": values,
        "metadata": json_safe(sol.metadata),
    }


def solved_game(doc: dict, g: ConstrainedMarkovGame) -> tuple:
    """The game a solution document was computed on, and its rounding spec."""
    approx = doc.get("approximation")
    if not approx:
        return g, None
    spec = RoundingSpec(
        approx["mode"],
        to_fraction(approx["eps"]),
        tuple(None if x is None else to_fraction(x) for x in approx["ell"]),
    )
    return build_approx_game(g, spec), spec


def solution_from_dict(doc: dict, g: ConstrainedMarkovGame, max_nodes: int | None = None) -> AceSolution:
    """Rebuild a solution against its game; the reduced game is recomputed."""
    if doc.get("format") != "acmg-solution":
        raise GameSchemaError("not a solution document")
    exact = bool(doc.get("exact", False))
    target, spec = solved_game(doc, g)
    _, fs = feasible_sets(target, max_nodes=max_nodes)
    if fs is None:
        raise GameSchemaError("solution given for an infeasible game")
    red = build_reduced_game(target, fs)
    H, n = red.horizon, red.n_players
    dists = {h: [None] * red.n_states(h) for h in range(1, H + 1)}
    for e in doc["policy"]:
        h = e["h"]
        key = (_state_index(target, e["state"]), _cost_key(e["cost"], red.scale))
        k = red.index.get(h, {}).get(key)
        if k is None or h > H:
            raise GameSchemaError(f"policy entry {e['state']} {e['cost']} at h={h} is not a feasible pair")
        dists[h][k] = {_joint_from_names(target, x["a"]): _parse_num(x["p"], exact) for x in e["dist"]}
    for h, row in dists.items():
        if any(d is None for d in row):
            raise GameSchemaError(f"policy misses feasible pairs at h={h}")
    values = {}
    for h in range(1, H + 2):
        if exact:
            arr = np.empty((n, red.n_states(h)), dtype=object)
            arr.fill(Fraction(0))
        else:
            arr = np.zeros((n, red.n_states(h)))
        values[h] = arr
    for e in doc["values"]:
        h = e["h"]
        key = (_state_index(target, e["state"]), _cost_key(e["cost"], red.scale))
        k = red.index.get(h, {}).get(key)
        if k is None:
            raise GameSchemaError(f"value entry {e['state']} {e['cost']} at h={h} is not a feasible pair")
        for i, v in enumerate(e["v"]):
            values[h][i, k] = _parse_num(v, exact)
    sol = AceSolution(
        AugmentedMarkovPolicy(red, dists), values, doc["kind"], exact, fs, dict(doc.get("metadata") or {})
    )
    if spec is not None:
        sol.rounding = spec
        sol.source = g
    return sol


# ---------------------------------------------------------------------------
# reduced games


def reduced_to_dict(red: ActionConstrainedMG) -> dict:
    g = red.game
    layers = []
    for h in range(1, red.horizon + 1):
        states = []
        for k, (s, cbar) in enumerate(red.states[h]):
            moves = []
            for a in red.allowed[h][k]:
                nxt = [
                    {
                        "state": g.states[red.states[h + 1][k2][0]],
                        "cost": _cost_doc(red.states[h + 1][k2][1], red.scale),
                        "p": fraction_str(p),
                    }
                    for k2, p in red.trans[h][k][a]
                ]
                moves.append({"a": g.joint_names(a), "reward": [fraction_str(r) for r in red.reward[h][k][a]], "next": nxt})
            states.append(
                {
                    "name": red.state_name(h, k),
                    "state": g.states[s],
                    "cost": _cost_doc(cbar, red.scale),
                    "product": bool(red.product[h][k]),
                    "allowed_actions": moves,
                }
            )
        layers.append({"h": h, "states": states})
    terminal = [{"state": g.states[s], "cost": _cost_doc(c, red.scale)} for s, c in red.states[red.horizon + 1]]
    return {
        "format": "acmg-reduced",
        "augmented": True,
        "game": game_to_dict(g),
        "scale": red.scale,
        "layers": layers,
        "terminal": terminal,
    }


def reduced_from_dict(doc: dict) -> ActionConstrainedMG:
    if doc.get("format") != "acmg-reduced":
        raise GameSchemaError("not a reduced-game document")
    g = game_from_dict(doc["game"], max_lattice=None)
    lam = int(doc["scale"])
    H = g.horizon
    states: dict = {}
    for layer in doc["layers"]:
        states[layer["h"]] = [(_state_index(g, e["state"]), _cost_key(e["cost"], lam)) for e in layer["states"]]
    states[H + 1] = [(_state_index(g, e["state"]), _cost_key(e["cost"], lam)) for e in doc["terminal"]]
    index = {h: {key: k for k, key in enumerate(v)} for h, v in states.items()}
    allowed, trans, reward, product = {}, {}, {}, {}
    for layer in doc["layers"]:
        h = layer["h"]
        allowed[h], trans[h], reward[h], product[h] = [], [], [], []
        for e in layer["states"]:
            acts, rows, rews = [], {}, {}
            for m in e["allowed_actions"]:
                a = _joint_from_names(g, m["a"])
                acts.append(a)
                rews[a] = tuple(to_fraction(r) for r in m["reward"])
                rows[a] = [
                    (index[h + 1][(_state_index(g, x["state"]), _cost_key(x["cost"], lam))], to_fraction(x["p"]))
                    for x in m["next"]
                ]
            allowed[h].append(tuple(acts))
            trans[h].append(rows)
            reward[h].append(rews)
            product[h].append(bool(e["product"]))
    return ActionConstrainedMG(g, lam, states, index, allowed, trans, reward, product)


# ---------------------------------------------------------------------------
# feasible sets


def feasible_sets_to_dict(fs: FeasibleSets, g: ConstrainedMarkovGame) -> dict:
    """Cumulative costs are integer lattice vectors; divide by ``scale`` for cost units."""
    layers = []
    for h in range(1, fs.horizon + 2):
        pairs = []
        for s, cbar in fs.fs[h]:
            e = {"state": g.states[s], "cbar": list(cbar)}
            if h <= fs.horizon:
                e["actions"] = [g.joint_names(a) for a in fs.fa[h][(s, cbar)]]
            pairs.append(e)
        layers.append({"h": h, "pairs": pairs})
    return {"format": "acmg-feasible-sets", "horizon": fs.horizon, "scale": fs.scale, "layers": layers}


def feasible_sets_from_dict(doc: dict, g: ConstrainedMarkovGame) -> FeasibleSets:
    if doc.get("format") != "acmg-feasible-sets":
        raise GameSchemaError("not a feasible-sets document")
    H, lam = int(doc["horizon"]), int(doc["scale"])
    fs, fa = {}, {}
    for layer in doc["layers"]:
        h = layer["h"]
        fs[h] = []
        if h <= H:
            fa[h] = {}
        for e in layer["pairs"]:
            key = (_state_index(g, e["state"]), tuple(int(x) for x in e["cbar"]))
            fs[h].append(key)
            if h <= H:
                fa[h][key] = tuple(_joint_from_names(g, x) for x in e["actions"])
    return FeasibleSets(H, lam, fs, fa)


# ---------------------------------------------------------------------------
# matrix games


def _unflatten(a: int, sizes) -> list:
    return [int(x) for x in np.unravel_index(a, sizes)]


def matrix_game_to_dict(game: ActionConstrainedMatrixGame) -> dict:
    sizes = tuple(game.action_sizes)
    return {
        "format": "acmg-matrix-game",
        "action_sizes": list(sizes),
        "allowed": [_unflatten(a, sizes) for a in game.allowed],
        "utilities": [[_num(x) for x in row] for row in game.utilities],
    }


def matrix_game_from_dict(doc: dict) -> ActionConstrainedMatrixGame:
    try:
        sizes = tuple(int(k) for k in doc["action_sizes"])
        total = math.prod(sizes)
        allowed = []
        for x in doc["allowed"]:
            if len(x) != len(sizes) or any(not 0 <= c < k for c, k in zip(x, sizes)):
                raise GameSchemaError(f"allowed action {x} out of range")
            allowed.append(int(np.ravel_multi_index(tuple(x), sizes)))
        rows = doc["utilities"]
    except (KeyError, TypeError) as exc:
        raise GameSchemaError(f"bad matrix game: {exc}") from None
    exact = any(isinstance(x, str) for row in rows for x in row)
    if len(rows) != len(sizes) or any(len(r) != total for r in rows):
        raise GameSchemaError("utilities must have one row of prod(action_sizes) entries per player")
    if exact:
        u = np.array([[to_fraction(x) for x in r] for r in rows], dtype=object)
    else:
        u = np.array(rows, dtype=float)
    if not allowed:
        raise GameSchemaError("allowed set is empty")
    return ActionConstrainedMatrixGame(sizes, tuple(sorted(set(allowed))), u)


def distribution_to_dict(sigma: JointDistribution, kind: str) -> dict:
    sizes = tuple(sigma.action_sizes)
    return {
        "format": "acmg-distribution",
        "kind": kind,
        "action_sizes": list(sizes),
        "dist": [{"a": _unflatten(a, sizes), "p": _num(p)} for a, p in sorted(sigma.probs.items())],
    }


def distribution_from_dict(doc: dict) -> JointDistribution:
    sizes = tuple(int(k) for k in doc["action_sizes"])
    probs = {}
    for e in doc["dist"]:
        p = e["p"]
        probs[int(np.ravel_multi_index(tuple(e["a"]), sizes))] = to_fraction(p) if isinstance(p, str) else float(p)
    return JointDistribution(sizes, probs)
