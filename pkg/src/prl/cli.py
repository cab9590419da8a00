"""Command line harness: ``prl run <config.json>``, ``prl list``, ``prl selftest``.

Heavy modules are imported only after ``PRL_THREADS`` has been applied to
the BLAS/OpenMP thread settings.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

log = logging.getLogger("prl")

EXIT_OK, EXIT_CHECKS_FAILED, EXIT_BAD_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap():
    cap = os.environ.get("PRL_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise ValueError(f"PRL_THREADS must be a positive integer, got {cap!r}")
    for var in _THREAD_VARS:
        os.environ.setdefault(var, cap)


def _jsonable(obj):
    # NaN/inf are not valid JSON; write them as strings
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return _jsonable(obj.item())
    return obj


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(cfg) - {"experiment", "seed", "output_dir", "params"}
    if unknown:
        raise ValueError(f"unknown top-level keys: {sorted(unknown)}")
    if "experiment" not in cfg:
        raise ValueError("config needs an 'experiment' field")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ValueError("seed must be a non-negative integer")
    if not isinstance(cfg.get("params", {}), dict):
        raise ValueError("params must be an object")
    return cfg


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in columns})


def write_tsv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_outcome(out_dir: Path, name: str, seed: int, params: dict, outcome) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / "results.csv", outcome.columns, outcome.rows)
    plot_dir = out_dir / "plotdata"
    plot_dir.mkdir(exist_ok=True)
    for plot, (header, rows) in outcome.plots.items():
        write_tsv(plot_dir / f"{plot}.tsv", header, rows)
    extra = dict(outcome.extra)
    traces = extra.pop("traces", None)
    if traces:
        trace_dir = out_dir / "traces"
        trace_dir.mkdir(exist_ok=True)
        cols = ["epoch", "train_objective", "clean_acc", "prob_acc", "cvar_test"]
        for key, trace in traces.items():
            write_csv(trace_dir / f"{key}.csv", cols, [vars(r) for r in trace])
    summary = {
        "experiment": name,
        "seed": seed,
        "params": params,
        "checks": {k: c.to_dict() for k, c in outcome.checks.items()},
        "passed": outcome.passed,
        **extra,
    }
    with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: invalid config {args.config}: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    from .experiments import merge_params, run_experiment

    name = cfg["experiment"]
    seed = cfg.get("seed", 0) if args.seed is None else args.seed
    out_dir = Path(args.out or cfg.get("output_dir") or f"runs/{name}")
    try:
        params = merge_params(name, cfg.get("params", {}))
    except (KeyError, TypeError) as exc:
        print(f"error: invalid config {args.config}: {exc.args[0]}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        outcome = run_experiment(name, params, seed)
    except (ValueError, TypeError) as exc:
        print(f"error: invalid parameters for {name}: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except (ArithmeticError, RuntimeError) as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        partial = {"experiment": name, "seed": seed, "params": params, "error": str(exc),
                   "passed": False}
        trace = getattr(exc, "trace", None)
        if trace:
            partial["trace"] = [vars(r) for r in trace]
        with open(out_dir / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(_jsonable(partial), fh, indent=2, sort_keys=True)
        print(f"error: numeric failure in {name}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    summary = write_outcome(out_dir, name, seed, params, outcome)
    for check, res in summary["checks"].items():
        print(f"{'PASS' if res['pass'] else 'FAIL'} {check}: {res['value']} ({res['threshold']})")
    print(f"wrote {out_dir}")
    return EXIT_OK if outcome.passed else EXIT_CHECKS_FAILED


def cmd_list(args) -> int:
    from .experiments import DEFAULTS

    for name, params in DEFAULTS.items():
        print(name)
        if args.verbose:
            print("  " + json.dumps(params, sort_keys=True))
    return EXIT_OK


def cmd_selftest(args) -> int:
    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print("error: test suite not found next to the package (source checkout needed)",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        import pytest
    except ImportError:
        print("error: selftest needs pytest (pip install .[test])", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return int(pytest.main([str(tests), "-q", *args.pytest_args]))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output directory")
    run.set_defaults(func=cmd_run)

    lst = sub.add_parser("list", help="list experiments")
    lst.add_argument("-v", "--verbose", action="store_true", help="show default parameters")
    lst.set_defaults(func=cmd_list)

    st = sub.add_parser("selftest", help="run the test suite")
    st.add_argument("pytest_args", nargs="*")
    st.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_thread_cap()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
