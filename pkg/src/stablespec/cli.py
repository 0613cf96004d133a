"""Command-line surface.

Subcommands: learn-pag (structure learning from CSV data), identify
(interventional expression for a query on a graph file), search (end-to-end
stable-predictor search), simulate (benchmark sampling), sweep (train on the
benchmark and score models across a shift grid), check (invariance of a
single conditional). Options can come from a JSON config file, with
command-line flags taking precedence. Exit codes: 0 success, 1 when the
result is FAIL (no stable candidate / not identifiable / not invariant),
2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .citest import degenerate_gaussian_test, fisher_z_test
from .data import DataError, DataTable, load_csv, save_csv
from .estimate import EstimationError
from .expressions import ExpressionError, to_json as expr_to_json, to_text
from .fci import fci, data_oracle, pooled_fci, possible_children_of_env
from .graph import GraphError, parse as parse_graph, serialize
from .identify import FAIL, InvarianceQuery, identify_interventional, \
    invariant_conditional
from .scm import SCMError
from .search import (
    DEFAULT_MAX_OBSERVED, InvarianceSpec, SearchBudgetError,
    search_stable_predictor, shift_sweep, simulate_benchmark,
    stable_candidates, fit_candidates, unstable_baseline, write_sweep_csv,
)

CI_TESTS = {"fisher-z": fisher_z_test,
            "degenerate-gaussian": degenerate_gaussian_test}


class InputError(ValueError):
    """Bad flags, files or config; maps to exit code 2."""


def _csv_list(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _load_tables(args) -> list[DataTable]:
    if not args.data:
        raise InputError("no --data files given")
    schemas = args.schema or []
    if len(schemas) == 1 and len(args.data) > 1:
        schemas = schemas * len(args.data)
    if len(schemas) != len(args.data):
        raise InputError("need one --schema per --data (or a single shared "
                         "schema)")
    return [load_csv(d, s) for d, s in zip(args.data, schemas)]


def _run_dir(args) -> str:
    out = args.out or "run"
    os.makedirs(out, exist_ok=True)
    return out


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text)


def _json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _learn(args, log: list[str]):
    """Shared structure-learning step; returns (pag, env name or None,
    report dict)."""
    tables = _load_tables(args)
    test = CI_TESTS[args.test]
    report: dict = {}
    if len(tables) > 1:
        pag = pooled_fci(tables, test=test, alpha=args.alpha,
                         env_name=args.env, max_cond_size=args.max_cond_size,
                         report=report)
        log.append(f"pooled structure learning over {len(tables)} datasets, "
                   f"environment column {args.env!r}")
        return pag, args.env, report
    table = tables[0]
    env = table.env_column
    oracle = data_oracle(table, test=test, alpha=args.alpha)
    pag = fci(oracle, table.names, max_cond_size=args.max_cond_size,
              report=report)
    log.append("structure learning over one dataset")
    return pag, env, report


def cmd_learn_pag(args) -> int:
    out = _run_dir(args)
    log: list[str] = []
    pag, _, report = _learn(args, log)
    _write(os.path.join(out, "graph.txt"), serialize(pag))
    _write(os.path.join(out, "report.json"), _json_dumps(report))
    log.append(f"graph written with {len(pag.edges)} edges, "
               f"{report['ci_tests']} CI tests")
    _write(os.path.join(out, "log.txt"), "\n".join(log) + "\n")
    print(serialize(pag), end="")
    return 0


def _read_graph(path: str, kind: str = "PAG"):
    with open(path) as fh:
        return parse_graph(fh.read(), kind)


def cmd_identify(args) -> int:
    pag = _read_graph(args.graph)
    expr = identify_interventional(pag, _csv_list(args.mutable),
                                   _csv_list(args.target),
                                   _csv_list(args.given or ""))
    if expr is FAIL:
        print("FAIL: not identifiable", file=sys.stderr)
        return 1
    print(to_text(expr))
    print(_json_dumps(expr_to_json(expr)), end="")
    if args.out:
        out = _run_dir(args)
        _write(os.path.join(out, "expression.json"),
               _json_dumps(expr_to_json(expr)))
    return 0


def cmd_check(args) -> int:
    pag = _read_graph(args.graph)
    q = InvarianceQuery(_csv_list(args.mutable), _csv_list(args.target),
                        _csv_list(args.given or ""))
    if invariant_conditional(pag, q):
        print("invariant")
        return 0
    print("not invariant")
    return 1


def _resolve_mutable(args, pag, env) -> frozenset[str]:
    if args.mutable:
        return frozenset(_csv_list(args.mutable))
    if args.mode == "single-env":
        raise InputError("mutable set required: single-environment search "
                         "has no environment column to derive it from")
    if env is None or env not in pag.vertices:
        raise InputError("mutable set required: no environment vertex to "
                         "derive possible children from")
    m = possible_children_of_env(pag, env)
    if not m:
        raise InputError(f"environment vertex {env!r} has no possible "
                         "children; pass --mutable explicitly")
    return frozenset(m)


def _candidates_json(candidates, winner) -> str:
    entries = [json.loads(c.to_json()) for c in candidates]
    return _json_dumps({"candidates": entries,
                        "winner": winner.label() if winner else None})


def cmd_search(args) -> int:
    out = _run_dir(args)
    log: list[str] = []
    if args.graph:
        pag = _read_graph(args.graph)
        env = args.env if args.env in pag.vertices else None
        tables = _load_tables(args)
        data = tables[0] if len(tables) == 1 else _pool(tables, args.env)
        log.append(f"graph loaded from {args.graph}")
    else:
        pag, env, _ = _learn(args, log)
        tables = _load_tables(args)
        data = tables[0] if len(tables) == 1 else _pool(tables, args.env)
    if args.mode == "single-env":
        env = None
    mutable = _resolve_mutable(args, pag, env)
    log.append(f"mutable set: {sorted(mutable)}")
    spec = InvarianceSpec(pag, mutable)
    candidates = stable_candidates(spec, args.target, args.mode, env,
                                   args.max_observed)
    fitted = fit_candidates(candidates, data, args.target, args.backend,
                            args.seed) if candidates else []
    winner = min(fitted, key=lambda c: (c.validation_loss, c.label())) \
        if fitted else None
    _write(os.path.join(out, "graph.txt"), serialize(pag))
    _write(os.path.join(out, "candidates.json"),
           _candidates_json(fitted, winner))
    for c in fitted:
        log.append(f"candidate {c.label()}: loss {c.validation_loss:.6f}")
    if winner is None:
        log.append("result: FAIL (no stable candidate)")
        _write(os.path.join(out, "log.txt"), "\n".join(log) + "\n")
        print("FAIL: no stable candidate", file=sys.stderr)
        return 1
    log.append(f"winner: {winner.label()}")
    _write(os.path.join(out, "log.txt"), "\n".join(log) + "\n")
    print(winner.label())
    return 0


def _pool(tables, env_name):
    from .data import concat_tables
    for t in tables:
        if env_name in t.names:
            raise InputError(f"column {env_name!r} already present")
    out = concat_tables(tables)
    env = np.concatenate([np.full(t.n_rows, i, dtype=float)
                          for i, t in enumerate(tables)])
    out = out.with_column(env_name, env, kind=len(tables))
    return DataTable({n: out.column(n) for n in out.names}, out.kinds,
                     env_column=env_name)


def cmd_simulate(args) -> int:
    table = simulate_benchmark(args.alpha, args.n, args.seed)
    save_csv(table, args.out_file)
    return 0


def cmd_sweep(args) -> int:
    out = _run_dir(args)
    log: list[str] = []
    train_alphas = [float(a) for a in _csv_list(args.train_alphas)]
    tables = []
    for i, a in enumerate(train_alphas):
        t = simulate_benchmark(a, args.n_train, args.seed + i)
        tables.append(t)
    data = _pool(tables, args.env)
    if not args.graph:
        raise InputError("sweep needs --graph (a PAG over the benchmark "
                         "variables plus the environment vertex)")
    pag = _read_graph(args.graph)
    mutable = _resolve_mutable(args, pag, args.env)
    spec = InvarianceSpec(pag, mutable)
    models = []
    for mode in ("full", "conditional-only"):
        best = search_stable_predictor(spec, args.target, data, mode,
                                       args.backend, args.seed, args.env,
                                       args.max_observed)
        if best is FAIL:
            print(f"FAIL: no stable candidate in {mode} mode",
                  file=sys.stderr)
            return 1
        models.append((best.label(), best.estimator))
        log.append(f"{mode} winner: {best.label()} "
                   f"loss {best.validation_loss:.6f}")
    base = unstable_baseline(data, args.target, args.backend, args.seed)
    models.append((base.label(), base.estimator))
    grid = np.linspace(args.grid_start, args.grid_stop, args.grid_points)
    rows = shift_sweep(models, list(grid), args.n_test, args.seed,
                       args.target)
    write_sweep_csv(rows, os.path.join(out, "metrics.csv"))
    log.append(f"{len(rows)} sweep rows written")
    _write(os.path.join(out, "log.txt"), "\n".join(log) + "\n")
    print(os.path.join(out, "metrics.csv"))
    return 0


def _add_data_flags(p):
    p.add_argument("--data", action="append", default=None,
                   help="CSV file; repeat for one dataset per environment")
    p.add_argument("--schema", action="append", default=None,
                   help="sidecar JSON schema for the matching --data")
    p.add_argument("--test", choices=sorted(CI_TESTS), default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="CI test significance level")
    p.add_argument("--env", default=None, help="environment column name")
    p.add_argument("--max-cond-size", type=int, default=None)


def _add_search_flags(p):
    p.add_argument("--graph", default=None, help="PAG file (skips learning)")
    p.add_argument("--target", default=None)
    p.add_argument("--mutable", default=None,
                   help="comma-separated mutable vertices; defaults to the "
                        "possible children of the environment vertex")
    p.add_argument("--mode", choices=("full", "conditional-only",
                                      "single-env"), default=None)
    p.add_argument("--backend", choices=("linear-gaussian",
                                         "discrete-exact"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-observed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="stablespec")
    top.add_argument("--config", default=None,
                     help="JSON file with defaults for any flag")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn-pag", help="learn a PAG from data")
    _add_data_flags(p)
    p.add_argument("--out", default=None, help="run directory")

    p = sub.add_parser("identify",
                       help="interventional expression for a query")
    p.add_argument("--graph", required=True)
    p.add_argument("--mutable", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--given", default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("check", help="invariance of a single conditional")
    p.add_argument("--graph", required=True)
    p.add_argument("--mutable", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--given", default=None)

    p = sub.add_parser("search", help="stable-predictor search")
    _add_data_flags(p)
    _add_search_flags(p)
    p.add_argument("--out", default=None)

    p = sub.add_parser("simulate", help="sample the shift benchmark")
    p.add_argument("--alpha", type=float, default=None,
                   help="confounding strength")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", dest="out_file", default=None,
                   help="output CSV path")

    p = sub.add_parser("sweep",
                       help="train on the benchmark, score across shifts")
    _add_search_flags(p)
    p.add_argument("--env", default=None)
    p.add_argument("--train-alphas", default=None,
                   help="comma-separated training shift strengths")
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--grid-start", type=float, default=None)
    p.add_argument("--grid-stop", type=float, default=None)
    p.add_argument("--grid-points", type=int, default=None)
    p.add_argument("--out", default=None)
    return top


DEFAULTS = {
    "test": "fisher-z", "alpha": 0.01, "env": "E",
    "mode": "full", "backend": "linear-gaussian", "seed": 0,
    "max_observed": DEFAULT_MAX_OBSERVED, "target": "Y",
    "train_alphas": "4,8", "n_train": 50000, "n_test": 10000,
    "grid_start": -5.0, "grid_stop": 17.0, "grid_points": 100,
    "n": 1000,
}


def _apply_config(args):
    """Fill unset flags from the config file, then from built-in defaults."""
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
        if not isinstance(config, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(config) - set(vars(args)) - {"command"}
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
    for key, value in config.items():
        if key != "command" and getattr(args, key, None) is None:
            setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if key == "alpha" and args.command == "simulate":
            continue  # the CI-level default is not a shift strength
        if getattr(args, key, "missing") is None:
            setattr(args, key, value)
    return args


COMMANDS = {
    "learn-pag": cmd_learn_pag,
    "identify": cmd_identify,
    "check": cmd_check,
    "search": cmd_search,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args)
        if args.command == "simulate":
            if args.out_file is None:
                raise InputError("simulate needs --out")
            if args.alpha is None:
                raise InputError("simulate needs --alpha")
        return COMMANDS[args.command](args)
    except SearchBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InputError, DataError, GraphError, SCMError, EstimationError,
            ExpressionError, OSError, json.JSONDecodeError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
