"""Report rendering: aggregate an existing results file into a summary table
and a set of figures.

The summary (mean over folds per dataset/flavor/sweep) goes out in the
same delimited format as the raw results; next to it land one
accuracy-vs-training-time trade-off figure and one metrics-over-sweep
figure per dataset.
"""

from __future__ import annotations

import math
import os
from collections import defaultdict
from typing import List

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import ResultRow, emit_results
from .exceptions import ParameterError

__all__ = ["aggregate_rows", "render_report"]

_FLAVOR_STYLE = {
    "owck": dict(color="tab:blue", marker="o"),
    "owfck": dict(color="tab:cyan", marker="v"),
    "gmmck": dict(color="tab:green", marker="s"),
    "mtck": dict(color="tab:red", marker="D"),
    "sod": dict(color="tab:orange", marker="^"),
    "full": dict(color="tab:gray", marker="x"),
}


def aggregate_rows(rows: List[ResultRow]) -> List[ResultRow]:
    """Mean over folds per (dataset, flavor, sweep).

    Aggregates are recomputed from the per-fold rows; pre-existing "mean"
    rows in the input are ignored so stale aggregates cannot leak through.
    """
    folds = [r for r in rows if r.fold != "mean" and r.error is None]
    if not folds:
        means = [r for r in rows if r.fold == "mean"]
        if means:
            return means
        raise ParameterError("results contain no usable rows")
    groups = defaultdict(list)
    for r in folds:
        groups[(r.dataset, r.flavor, r.sweep)].append(r)
    out = []
    for (dataset, flavor, sweep), members in sorted(groups.items()):
        agg = ResultRow(dataset=dataset, flavor=flavor, sweep=sweep, fold="mean")
        for col in ("r2", "smse", "msll", "fit_time_s", "predict_time_s"):
            vals = [getattr(m, col) for m in members]
            agg_val = float(sum(vals) / len(vals))
            setattr(agg, col, agg_val)
        out.append(agg)
    return out


def _by_dataset(aggs: List[ResultRow]):
    table = defaultdict(list)
    for r in aggs:
        table[r.dataset].append(r)
    return table


def _tradeoff_figure(dataset: str, rows: List[ResultRow], path: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    by_flavor = defaultdict(list)
    for r in rows:
        if not (math.isnan(r.fit_time_s) or math.isnan(r.r2)):
            by_flavor[r.flavor].append(r)
    for flavor, members in sorted(by_flavor.items()):
        members.sort(key=lambda r: r.fit_time_s)
        style = _FLAVOR_STYLE.get(flavor, {})
        ax.plot(
            [m.fit_time_s for m in members], [m.r2 for m in members],
            linestyle="--", linewidth=0.8, markersize=5, label=flavor, **style,
        )
        for m in members:
            ax.annotate(str(m.sweep), (m.fit_time_s, m.r2), fontsize=7,
                        textcoords="offset points", xytext=(3, 3))
    ax.set_xscale("log")
    ax.set_xlabel("training time [s]")
    ax.set_ylabel("R²")
    ax.set_title(f"{dataset}: accuracy vs training time")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _sweep_figure(dataset: str, rows: List[ResultRow], path: str):
    fig, axes = plt.subplots(2, 2, figsize=(9.0, 6.4), sharex=True)
    panels = [
        ("r2", "R²", axes[0, 0]),
        ("smse", "SMSE", axes[0, 1]),
        ("msll", "MSLL", axes[1, 0]),
        ("fit_time_s", "training time [s]", axes[1, 1]),
    ]
    by_flavor = defaultdict(list)
    for r in rows:
        if r.sweep > 0:  # "full" has no sweep axis
            by_flavor[r.flavor].append(r)
    for col, label, ax in panels:
        for flavor, members in sorted(by_flavor.items()):
            members = sorted(members, key=lambda r: r.sweep)
            xs = [m.sweep for m in members]
            ys = [getattr(m, col) for m in members]
            ax.plot(xs, ys, linewidth=1.0, markersize=4, label=flavor,
                    **_FLAVOR_STYLE.get(flavor, {}))
        ax.set_xscale("log", base=2)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    axes[1, 0].set_xlabel("clusters / subset size")
    axes[1, 1].set_xlabel("clusters / subset size")
    axes[0, 0].legend(fontsize=8)
    fig.suptitle(f"{dataset}: scores across the sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(rows: List[ResultRow], out_dir, fmt: str = "csv") -> List[str]:
    """Write the aggregate table and figures into ``out_dir``.

    Returns the list of files written: ``summary.<fmt>`` plus
    ``tradeoff_<dataset>.png`` and ``sweep_<dataset>.png`` per dataset.
    """
    os.makedirs(out_dir, exist_ok=True)
    aggs = aggregate_rows(rows)
    written = []
    summary_path = os.path.join(out_dir, f"summary.{fmt}")
    emit_results(aggs, fmt, summary_path)
    written.append(summary_path)
    for dataset, members in sorted(_by_dataset(aggs).items()):
        tradeoff = os.path.join(out_dir, f"tradeoff_{dataset}.png")
        _tradeoff_figure(dataset, members, tradeoff)
        written.append(tradeoff)
        sweep = os.path.join(out_dir, f"sweep_{dataset}.png")
        _sweep_figure(dataset, members, sweep)
        written.append(sweep)
    return written
