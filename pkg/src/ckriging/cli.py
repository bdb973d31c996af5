"""Command-line interface.

Subcommands:

* ``synth``  - generate a synthetic dataset CSV
* ``run``    - execute an experiment sweep (flags and/or a JSON config file)
* ``report`` - aggregate an existing results file and render figures

``run`` writes result rows incrementally, so an interrupted sweep still
leaves a readable partial file.  Exit code 0 on success, 1 on any fatal
error (with a diagnostic on stderr), 2 on bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys

from .bench import (
    CSV_HEADER,
    ExperimentConfig,
    emit_results,
    read_results,
    row_to_csv_line,
    run_experiment,
)
from .dataio import write_dataset_csv
from .exceptions import CkrigingError
from .functions import FUNCTIONS, synth_dataset

_CONFIG_KEYS = {
    "dataset": str, "target": str, "function": str, "n": int, "d": int,
    "flavor": list, "clusters": list, "subset_size": list,
    "overlap": float, "folds": int, "seed": int, "nugget": None,
    "workers": int, "out": str, "format": str,
    "restarts": int, "isotropic": bool, "min_leaf_size": int,
    "fuzzifier": float, "gmm_covariance": str, "standardize": bool,
}


def _parse_nugget(text):
    if text in ("auto", "optimize"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"nugget must be 'auto', 'optimize' or a number, got {text!r}"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckriging",
        description="Cluster Kriging benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    synth.add_argument("--function", required=True, choices=sorted(FUNCTIONS))
    synth.add_argument("--n", type=int, default=2000)
    synth.add_argument("--d", type=int, default=5)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True, help="output CSV path")

    run = sub.add_parser("run", help="execute an experiment sweep")
    run.add_argument("--config", help="JSON config file mirroring the flags; flags win")
    run.add_argument("--dataset", help="CSV dataset path (instead of --function)")
    run.add_argument("--target", help="target column name for --dataset (default: last)")
    run.add_argument("--function", choices=sorted(FUNCTIONS), help="synthetic function")
    run.add_argument("--n", type=int, help="synthetic sample count (default 2000)")
    run.add_argument("--d", type=int, help="synthetic dimension (default 5)")
    run.add_argument("--flavor", action="append",
                     choices=["owck", "owfck", "gmmck", "mtck", "sod", "full"],
                     help="repeatable; default mtck + sod")
    run.add_argument("--clusters", action="append", type=int,
                     help="repeatable cluster-count sweep (default 2 4 8 16)")
    run.add_argument("--subset-size", action="append", type=int, dest="subset_size",
                     help="repeatable subset-size sweep for sod (default 512)")
    run.add_argument("--overlap", type=float, help="soft-cluster overlap factor in [1, 2]")
    run.add_argument("--folds", type=int, help="cross-validation folds (default 5)")
    run.add_argument("--seed", type=int, help="master seed (default 0)")
    run.add_argument("--nugget", type=_parse_nugget, help="'auto', 'optimize' or a value")
    run.add_argument("--workers", type=int, help="concurrent cells per sweep group")
    run.add_argument("--out", help="results file (default results.csv)")
    run.add_argument("--format", choices=["csv", "json"], help="output format")

    report = sub.add_parser("report", help="aggregate results and render figures")
    report.add_argument("results", help="results file produced by 'run'")
    report.add_argument("--out", default="report", help="output directory (default: report)")
    report.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def _merge_config(args) -> dict:
    """File values first, then flags; flags always win."""
    merged = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(_CONFIG_KEYS)
        if unknown:
            raise CkrigingError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _experiment_from(merged: dict) -> ExperimentConfig:
    kwargs = {}
    if "dataset" in merged:
        kwargs["csv_path"] = merged["dataset"]
        kwargs["function"] = None
    if "target" in merged:
        kwargs["target"] = merged["target"]
    if "dataset" not in merged:
        kwargs["function"] = merged.get("function", "rastrigin")
    for src, dst in [
        ("n", "n"), ("d", "d"), ("flavor", "flavors"), ("clusters", "clusters"),
        ("subset_size", "subset_sizes"), ("overlap", "overlap"), ("folds", "folds"),
        ("seed", "seed"), ("nugget", "nugget"), ("workers", "workers"),
        ("restarts", "restarts"), ("isotropic", "isotropic"),
        ("min_leaf_size", "min_leaf_size"), ("fuzzifier", "fuzzifier"),
        ("gmm_covariance", "gmm_covariance"), ("standardize", "standardize"),
    ]:
        if src in merged:
            kwargs[dst] = merged[src]
    if isinstance(kwargs.get("nugget"), str) and kwargs["nugget"] not in ("auto", "optimize"):
        kwargs["nugget"] = float(kwargs["nugget"])
    return ExperimentConfig(**kwargs)


class _StreamWriter:
    """Append rows to the output as they arrive.

    CSV appends line by line; JSON rewrites the (small) array on each row
    so the file stays parseable after an interruption either way.
    """

    def __init__(self, path: str, fmt: str):
        self.path = path
        self.fmt = fmt
        self.rows = []
        if fmt == "csv":
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(CSV_HEADER + "\n")

    def __call__(self, row):
        self.rows.append(row)
        if self.fmt == "csv":
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(row_to_csv_line(row) + "\n")
        else:
            emit_results(self.rows, "json", self.path)
        if row.error is not None:
            print(f"[fail] {row.flavor} sweep={row.sweep} fold={row.fold}: {row.error}",
                  file=sys.stderr)
        else:
            print(f"[done] {row.flavor} sweep={row.sweep} fold={row.fold} "
                  f"r2={row.r2:.4f}", file=sys.stderr)


def _cmd_synth(args) -> int:
    data = synth_dataset(args.function, args.n, args.d, seed=args.seed)
    write_dataset_csv(data, args.out)
    print(f"wrote {args.out}: {data.n} rows, {data.d} features + target")
    return 0


def _cmd_run(args) -> int:
    merged = _merge_config(args)
    config = _experiment_from(merged)
    out_path = merged.get("out", "results.csv")
    fmt = merged.get("format", "csv")
    writer = _StreamWriter(out_path, fmt)
    rows = run_experiment(config, on_row=writer)
    if fmt == "json":
        emit_results(rows, "json", out_path)
    failures = sum(1 for r in rows if r.error is not None)
    print(f"wrote {out_path}: {len(rows)} rows ({failures} failed cells)")
    return 0


def _cmd_report(args) -> int:
    from .report import render_report  # defers the matplotlib import

    rows = read_results(args.results)
    written = render_report(rows, args.out, fmt=args.format)
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "report":
            return _cmd_report(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (CkrigingError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
