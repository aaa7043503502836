"""``ace`` command line: exit 0 on success, 1 on a domain failure, 2 on usage errors."""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from importlib import resources

from . import documents
from .approximation import MODES, approx_solve
from .equilibrium import solve_acmg
from .feasibility import SizeError, feasible_sets
from .game import (
    DEFAULT_MAX_LATTICE,
    GameSchemaError,
    PrecisionError,
    cost_precision_bits,
    fraction_str,
    lattice_extent,
    load_game,
)
from .reduction import build_reduced_game
from .stage_lp import KINDS, NoSolutionError, solve_matrix_game
from .verify import OracleCapError, Tolerances, brute_force_feasible_sets, check_solution

OK, FAIL, USAGE = 0, 1, 2
CORPUS_EPS = ("0.5", "0.1", "0.02")


class UsageError(Exception):
    pass


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        sys.stdout.write(documents.dumps(documents.json_safe(doc)))
    else:
        print(text)


def _write(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(documents.dumps(doc))


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise GameSchemaError(f"{path}: invalid JSON: {exc}") from None


def _load(path, exact_lattice: bool = True):
    try:
        return load_game(path, max_lattice=DEFAULT_MAX_LATTICE if exact_lattice else None)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _infeasible(args) -> int:
    _emit(args, {"status": "infeasible"}, "infeasible")
    return FAIL


def _positive_fraction(text: str) -> Fraction:
    try:
        x = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if x <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return x


def _positive_int(text: str) -> int:
    try:
        x = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if x < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return x


# ---------------------------------------------------------------------------
# commands


def cmd_validate(args) -> int:
    g = _load(args.game, exact_lattice=False)
    extent = lattice_extent(g)
    doc = {
        "status": "valid",
        "players": g.n_players,
        "states": g.n_states,
        "horizon": g.horizon,
        "joint_actions": g.n_joint,
        "cost_scale": g.cost_scale if not g.has_continuous_costs else None,
        "cost_bits": cost_precision_bits(g),
        "exact_mode": not g.has_continuous_costs and extent <= DEFAULT_MAX_LATTICE,
    }
    text = f"valid: {g.n_players} players, {g.n_states} states, horizon {g.horizon}"
    if not doc["exact_mode"]:
        text += " (approximation mode only)"
    _emit(args, doc, text)
    return OK


def cmd_feasibility(args) -> int:
    g = _load(args.game)
    dag, fs = feasible_sets(g, max_nodes=args.max_nodes)
    doc = {
        "status": "feasible" if fs is not None else "infeasible",
        "or_nodes": dag.n_or,
        "and_nodes": dag.n_and,
        "distinct_costs": len(dag.distinct_costs()),
    }
    if fs is not None:
        doc["feasible_pairs"] = [fs.n_pairs(h) for h in range(1, g.horizon + 2)]
        if args.dump_sets:
            _write(args.dump_sets, documents.feasible_sets_to_dict(fs, g))
    text = f"{doc['status']}: {dag.n_or} OR nodes, {dag.n_and} AND nodes, D_G = {doc['distinct_costs']}"
    if fs is not None:
        text += "\n|FS_h| for h = 1..H+1: " + " ".join(str(x) for x in doc["feasible_pairs"])
    _emit(args, doc, text)
    return OK if fs is not None else FAIL


def cmd_reduce(args) -> int:
    g = _load(args.game)
    _, fs = feasible_sets(g, max_nodes=args.max_nodes)
    if fs is None:
        return _infeasible(args)
    red = build_reduced_game(g, fs)
    doc = documents.reduced_to_dict(red)
    if args.out:
        _write(args.out, doc)
    summary = {
        "status": "feasible",
        "augmented_states": [red.n_states(h) for h in range(1, g.horizon + 2)],
        "non_product_states": len(red.non_product_states()),
    }
    _emit(args, summary if args.out else doc, f"reduced game: {sum(summary['augmented_states'])} augmented states, "
          f"{summary['non_product_states']} with non-product action sets")
    return OK


def cmd_stage_lp(args) -> int:
    game = documents.matrix_game_from_dict(_read_json(args.matrix))
    try:
        sigma = solve_matrix_game(game, args.kind)
    except NoSolutionError as exc:
        print(f"no solution: {exc}", file=sys.stderr)
        return FAIL
    doc = documents.distribution_to_dict(sigma, args.kind)
    if args.out:
        _write(args.out, doc)
    lines = [f"{a['a']}: {a['p']}" for a in doc["dist"]]
    _emit(args, doc, "\n".join(lines))
    return OK


def _solution_summary(sol) -> dict:
    return {
        "status": "solved",
        "kind": sol.kind,
        "values": [fraction_str(v) if isinstance(v, Fraction) else v for v in sol.root_values()],
        "metadata": sol.metadata,
    }


def cmd_solve(args) -> int:
    g = _load(args.game)
    sol = solve_acmg(g, args.kind, exact=args.exact, max_nodes=args.max_nodes)
    if sol is None:
        return _infeasible(args)
    if args.out:
        _write(args.out, documents.solution_to_dict(sol))
    vals = ", ".join(str(v) for v in sol.root_values())
    _emit(args, _solution_summary(sol), f"solved ({sol.kind}): root values [{vals}]")
    return OK


def cmd_approx(args) -> int:
    g = _load(args.game, exact_lattice=False)
    sol = approx_solve(g, args.eps, args.mode, args.kind, exact=args.exact, max_nodes=args.max_nodes)
    if sol is None:
        return _infeasible(args)
    if args.out:
        _write(args.out, documents.solution_to_dict(sol))
    vals = ", ".join(str(v) for v in sol.root_values())
    ell = ", ".join(fraction_str(x) if x is not None else "-" for x in sol.rounding.ell)
    _emit(args, _solution_summary(sol), f"solved ({sol.kind}, {args.mode}, ell = [{ell}]): root values [{vals}]")
    return OK


def cmd_verify(args) -> int:
    g = _load(args.game, exact_lattice=False)
    sol = documents.solution_from_dict(_read_json(args.solution), g, max_nodes=args.max_nodes)
    rep = check_solution(sol, Tolerances(rollouts=args.rollouts, seed=args.seed), game=g)
    lines = [f"{'PASS' if it.passed else 'FAIL'} {it.name}: {it.detail}".rstrip(": ") for it in rep.items]
    _emit(args, rep.as_dict(), "\n".join(lines))
    return OK if rep.passed else FAIL


def corpus_paths():
    root = resources.files("acmg") / "corpus"
    return sorted((p for p in root.iterdir() if p.name.endswith(".json")), key=lambda p: p.name)


def run_corpus(seed: int, rollouts: int, kinds=KINDS) -> list:
    """One row per (instance, kind). Deterministic given the seed."""
    rows = []
    for path in corpus_paths():
        name = path.name[: -len(".json")]
        g = load_game(path)
        bound = (g.horizon * 2 ** (cost_precision_bits(g) + 1)) ** g.n_players
        for kind in kinds:
            row = {"instance": name, "kind": kind}
            sol = solve_acmg(g, kind)
            if sol is None:
                try:
                    agree = brute_force_feasible_sets(g) is None
                except OracleCapError:
                    agree = True
                row.update(status="infeasible", verdict="PASS" if agree else "FAIL", checks={"oracle": agree})
                rows.append(row)
                continue
            rep = check_solution(sol, Tolerances(rollouts=rollouts, seed=seed))
            checks = {it.name: it.passed for it in rep.items}
            d_g = sol.metadata["D_G"]
            checks["fpt-bound"] = d_g <= bound
            approx_ok = True
            for eps in CORPUS_EPS:
                asol = approx_solve(g, eps, kind=kind)
                if asol is None:
                    approx_ok = False
                    break
                if eps == "0.1":
                    approx_ok = approx_ok and check_solution(asol, Tolerances(rollouts=rollouts, seed=seed)).passed
            checks["approx"] = approx_ok
            row.update(
                status="solved",
                values=[round(v, 6) for v in sol.root_values()],
                D_G=d_g,
                bound=bound,
                checks=checks,
                verdict="PASS" if all(checks.values()) else "FAIL",
            )
            rows.append(row)
    return rows


def cmd_corpus(args) -> int:
    rows = run_corpus(args.seed, args.rollouts)
    ok = all(r["verdict"] == "PASS" for r in rows)
    if args.json:
        _emit(args, {"seed": args.seed, "rollouts": args.rollouts, "passed": ok, "rows": rows}, "")
    else:
        head = f"{'instance':<20} {'kind':<4} {'status':<10} {'D_G':>5} {'bound':>6}  {'values':<28} verdict"
        print(head)
        print("-" * len(head))
        for r in rows:
            vals = "[" + ", ".join(f"{v:.4f}" for v in r.get("values", [])) + "]" if "values" in r else "-"
            print(
                f"{r['instance']:<20} {r['kind']:<4} {r['status']:<10} {r.get('D_G', '-'):>5} "
                f"{r.get('bound', '-'):>6}  {vals:<28} {r['verdict']}"
            )
        print(f"seed {args.seed}, {args.rollouts} rollouts: {'all PASS' if ok else 'FAILURES'}")
    return OK if ok else FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ace", description="Anytime-constrained Markov game solver.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", action="store_true", help="machine-readable output")
        sp.add_argument("--max-nodes", type=_positive_int, default=None,
                        help="feasibility node cap (default: $ACE_MAX_NODES or 5000000)")
        return sp

    sp = common(sub.add_parser("validate", help="check a game file"))
    sp.add_argument("game")
    sp.set_defaults(func=cmd_validate)

    sp = common(sub.add_parser("feasibility", help="decide feasibility"))
    sp.add_argument("game")
    sp.add_argument("--dump-sets", metavar="PATH", help="write feasible sets as JSON")
    sp.set_defaults(func=cmd_feasibility)

    sp = common(sub.add_parser("reduce", help="build the augmented action-constrained game"))
    sp.add_argument("game")
    sp.add_argument("--out", metavar="PATH")
    sp.set_defaults(func=cmd_reduce)

    sp = common(sub.add_parser("stage-lp", help="solve one action-constrained matrix game"))
    sp.add_argument("matrix")
    sp.add_argument("--kind", choices=KINDS, default="cce")
    sp.add_argument("--out", metavar="PATH")
    sp.set_defaults(func=cmd_stage_lp)

    sp = common(sub.add_parser("solve", help="exact equilibrium"))
    sp.add_argument("game")
    sp.add_argument("--kind", choices=KINDS, default="cce")
    sp.add_argument("--exact", action="store_true", help="rational arithmetic throughout")
    sp.add_argument("--out", metavar="PATH")
    sp.set_defaults(func=cmd_solve)

    sp = common(sub.add_parser("approx", help="approximate equilibrium on a rounded cost grid"))
    sp.add_argument("game")
    sp.add_argument("--eps", type=_positive_fraction, required=True)
    sp.add_argument("--mode", choices=MODES, default="additive")
    sp.add_argument("--kind", choices=KINDS, default="cce")
    sp.add_argument("--exact", action="store_true")
    sp.add_argument("--out", metavar="PATH")
    sp.set_defaults(func=cmd_approx)

    sp = common(sub.add_parser("verify", help="check a solution file"))
    sp.add_argument("game")
    sp.add_argument("solution")
    sp.add_argument("--rollouts", type=_positive_int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_verify)

    sp = common(sub.add_parser("corpus", help="solve and verify the bundled instances"))
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--rollouts", type=_positive_int, default=10_000)
    sp.set_defaults(func=cmd_corpus)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return USAGE
    except (GameSchemaError, PrecisionError, SizeError, ValueError) as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return FAIL


if __name__ == "__main__":
    sys.exit(main())
