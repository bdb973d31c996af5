"""Experiment harness: sweeps over flavors and cluster counts with k-fold CV.

Each cell (flavor x sweep value x fold) standardizes features and target
on its training fold, fits the requested estimator, predicts the held-out
fold and records quality metrics plus wall-clock timings.  Cell failures
become rows carrying the error message instead of aborting the sweep.
Metric values are deterministic for a fixed seed; timing columns are not.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np
from threadpoolctl import threadpool_limits

from .cluster import FLAVORS, ClusterConfig, ck_fit, ck_predict
from .dataio import load_csv
from .exceptions import CkrigingError, ParameterError
from .functions import FUNCTIONS, synth_dataset
from .gp import Dataset, FitConfig
from .metrics import EvalReport, kfold_split, msll, r2_score, smse

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "ResultRow",
    "emit_results",
    "read_results",
    "run_experiment",
]

CSV_HEADER = "dataset,flavor,sweep,fold,r2,smse,msll,fit_time_s,predict_time_s"

_CLUSTER_FLAVORS = ("owck", "owfck", "gmmck", "mtck")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one ``run`` needs; mirrors the CLI flags.

    The dataset is either synthetic (``function``/``n``/``d``) or external
    (``csv_path``/``target``).  ``clusters`` sweeps the cluster flavors,
    ``subset_sizes`` sweeps the subset baseline; ``full`` takes a single
    cell per fold with sweep value 0.
    """

    flavors: tuple = ("mtck", "sod")
    clusters: tuple = (2, 4, 8, 16)
    subset_sizes: tuple = (512,)
    function: Optional[str] = "rastrigin"
    n: int = 2000
    d: int = 5
    csv_path: Optional[str] = None
    target: Optional[str] = None
    folds: int = 5
    seed: int = 0
    overlap: float = 1.1
    nugget: Union[float, str] = "auto"
    restarts: int = 5
    isotropic: bool = False
    min_leaf_size: int = 2
    fuzzifier: float = 2.0
    gmm_covariance: str = "auto"
    workers: int = 1
    standardize: bool = True

    def __post_init__(self):
        flavors = tuple(self.flavors)
        for f in flavors:
            if f not in FLAVORS:
                raise ParameterError(f"unknown flavor {f!r}; expected one of {FLAVORS}")
        if not flavors:
            raise ParameterError("at least one flavor is required")
        for name, values in (("clusters", self.clusters), ("subset_sizes", self.subset_sizes)):
            values = tuple(int(v) for v in values)
            if any(v <= 0 for v in values):
                raise ParameterError(f"{name} must be positive, got {values}")
            values = tuple(sorted(set(values)))
            object.__setattr__(self, name, values)
        object.__setattr__(self, "flavors", flavors)
        if self.csv_path is None:
            if self.function not in FUNCTIONS:
                raise ParameterError(
                    f"unknown function {self.function!r}; expected one of {sorted(FUNCTIONS)}"
                )
            if self.d < 1:
                raise ParameterError(f"d must be >= 1, got {self.d}")
            if self.n < 10 * self.folds:
                raise ParameterError(
                    f"synthetic n must be at least 10*folds={10 * self.folds}, got {self.n}"
                )
        if self.folds < 2:
            raise ParameterError(f"folds must be >= 2, got {self.folds}")
        if self.workers < 1:
            raise ParameterError(f"workers must be >= 1, got {self.workers}")

    @property
    def dataset_name(self) -> str:
        if self.csv_path is not None:
            import os

            return os.path.splitext(os.path.basename(self.csv_path))[0]
        return self.function

    def sweep_values(self, flavor: str) -> tuple:
        if flavor in _CLUSTER_FLAVORS:
            return self.clusters
        if flavor == "sod":
            return self.subset_sizes
        return (0,)  # "full": no hyper-parameter

    def load_dataset(self) -> Dataset:
        if self.csv_path is not None:
            return load_csv(self.csv_path, self.target)
        return synth_dataset(self.function, self.n, self.d, seed=self.seed)


@dataclass
class ResultRow:
    dataset: str
    flavor: str
    sweep: int
    fold: Union[int, str]  # fold index, or "mean" for aggregates
    r2: float = math.nan
    smse: float = math.nan
    msll: float = math.nan
    fit_time_s: float = math.nan
    predict_time_s: float = math.nan
    error: Optional[str] = None


def _cell_seed(seed: int, fold: int) -> int:
    # Depends on the fold only (not flavor or sweep) so that degenerate
    # configurations coincide exactly: sod with subset = n reproduces full.
    return int(np.random.SeedSequence([int(seed), int(fold)]).generate_state(1)[0])


@dataclass(frozen=True)
class _Standardizer:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @staticmethod
    def from_train(X, y, enabled: bool) -> "_Standardizer":
        if not enabled:
            d = X.shape[1]
            return _Standardizer(np.zeros(d), np.ones(d), 0.0, 1.0)
        x_std = X.std(axis=0)
        x_std[x_std == 0.0] = 1.0
        y_std = float(y.std()) or 1.0
        return _Standardizer(X.mean(axis=0), x_std, float(y.mean()), y_std)

    def transform(self, X, y=None):
        Xs = (X - self.x_mean) / self.x_std
        if y is None:
            return Xs
        return Xs, (y - self.y_mean) / self.y_std

    def restore(self, mean, variance):
        return mean * self.y_std + self.y_mean, variance * self.y_std**2


def _run_cell(data: Dataset, config: ExperimentConfig, flavor: str,
              sweep: int, fold: int, fold_of: np.ndarray) -> ResultRow:
    # Serial BLAS per cell: cells parallelize across workers instead, and
    # metric values stay identical for every worker count.
    with threadpool_limits(limits=1):
        return _run_cell_inner(data, config, flavor, sweep, fold, fold_of)


def _run_cell_inner(data: Dataset, config: ExperimentConfig, flavor: str,
                    sweep: int, fold: int, fold_of: np.ndarray) -> ResultRow:
    row = ResultRow(dataset=config.dataset_name, flavor=flavor, sweep=sweep, fold=fold)
    try:
        test = fold_of == fold
        X_tr, y_tr = data.X[~test], data.y[~test]
        X_te, y_te = data.X[test], data.y[test]
        std = _Standardizer.from_train(X_tr, y_tr, config.standardize)
        Xs, ys = std.transform(X_tr, y_tr)
        train = Dataset(Xs, ys)

        fit_cfg = FitConfig(nugget=config.nugget, restarts=config.restarts,
                            isotropic=config.isotropic)
        cl_cfg = ClusterConfig(
            overlap=config.overlap, fuzzifier=config.fuzzifier,
            gmm_covariance=config.gmm_covariance, min_leaf_size=config.min_leaf_size,
            subset_size=(min(sweep, train.n) if flavor == "sod" else None),
        )
        k = sweep if flavor in _CLUSTER_FLAVORS else 1
        seed = _cell_seed(config.seed, fold)

        t0 = time.perf_counter()
        model = ck_fit(train, flavor, k=k, fit_config=fit_cfg, cluster_config=cl_cfg, seed=seed)
        t1 = time.perf_counter()
        pred = ck_predict(model, std.transform(X_te))
        t2 = time.perf_counter()

        mean, variance = std.restore(pred.mean, pred.variance)
        variance = np.maximum(variance, 1e-12)  # msll needs strictly positive
        report = EvalReport(
            r2=r2_score(y_te, mean),
            smse=smse(y_te, mean),
            msll=msll(y_te, mean, variance,
                      train_mean=float(y_tr.mean()), train_var=float(np.var(y_tr))),
            fit_time_s=t1 - t0,
            predict_time_s=t2 - t1,
        )
        for name in _FLOAT_COLUMNS:
            setattr(row, name, getattr(report, name))
    except (CkrigingError, FloatingPointError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _aggregate(rows: List[ResultRow]) -> ResultRow:
    ok = [r for r in rows if r.error is None]
    agg = ResultRow(dataset=rows[0].dataset, flavor=rows[0].flavor,
                    sweep=rows[0].sweep, fold="mean")
    if ok:
        for name in ("r2", "smse", "msll", "fit_time_s", "predict_time_s"):
            setattr(agg, name, float(np.mean([getattr(r, name) for r in ok])))
    else:
        agg.error = "all folds failed"
    return agg


def run_experiment(config: ExperimentConfig,
                   on_row: Optional[Callable[[ResultRow], None]] = None) -> List[ResultRow]:
    """Run every (flavor, sweep value, fold) cell plus per-group aggregates.

    Rows are produced in a deterministic order (flavors as given, sweep
    values ascending, folds ascending, aggregate last per group) and
    passed to ``on_row`` as they are finalized, so a caller can stream
    them to disk and keep partial output on interruption.  Cells within a
    group run concurrently when ``config.workers`` > 1.
    """
    data = config.load_dataset()
    fold_of = kfold_split(data.n, config.folds, seed=config.seed)
    out: List[ResultRow] = []

    def emit(row: ResultRow):
        out.append(row)
        if on_row is not None:
            on_row(row)

    for flavor in config.flavors:
        for sweep in config.sweep_values(flavor):
            args = [
                (data, config, flavor, sweep, fold, fold_of)
                for fold in range(config.folds)
            ]
            if config.workers > 1:
                with ThreadPoolExecutor(max_workers=config.workers) as pool:
                    group = list(pool.map(lambda a: _run_cell(*a), args))
            else:
                group = [_run_cell(*a) for a in args]
            for row in group:
                emit(row)
            emit(_aggregate(group))
    return out


# ---------------------------------------------------------------------------
# Result emission / ingestion
# ---------------------------------------------------------------------------

_FLOAT_COLUMNS = ("r2", "smse", "msll", "fit_time_s", "predict_time_s")


def format_float(value: float) -> str:
    """Six significant digits; nan spelled out."""
    return "%.6g" % value


def row_to_csv_line(row: ResultRow) -> str:
    cells = [row.dataset, row.flavor, str(row.sweep), str(row.fold)]
    cells += [format_float(getattr(row, c)) for c in _FLOAT_COLUMNS]
    return ",".join(cells)


def _row_to_json_obj(row: ResultRow) -> dict:
    obj = {"dataset": row.dataset, "flavor": row.flavor, "sweep": row.sweep, "fold": row.fold}
    for c in _FLOAT_COLUMNS:
        v = getattr(row, c)
        obj[c] = None if math.isnan(v) else float(format_float(v))
    if row.error is not None:
        obj["error"] = row.error
    return obj


def emit_results(rows: List[ResultRow], fmt: str, path) -> None:
    """Write rows as CSV (fixed header) or a JSON array.

    Floats carry six significant digits.  CSV cannot hold the error text
    of failed rows (their metric cells read ``nan``); JSON rows carry an
    extra ``error`` key for them.
    """
    if not rows:
        raise ParameterError("no result rows to emit")
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in rows:
                fh.write(row_to_csv_line(row) + "\n")
    elif fmt == "json":
        import json

        with open(path, "w", encoding="utf-8") as fh:
            json.dump([_row_to_json_obj(r) for r in rows], fh, indent=1)
    else:
        raise ParameterError(f"format must be 'csv' or 'json', got {fmt!r}")


def read_results(path) -> List[ResultRow]:
    """Read rows back from a file written by :func:`emit_results`."""
    import json
    import os

    if not os.path.exists(path):
        raise ParameterError(f"no such results file: {path}")
    rows: List[ResultRow] = []
    if str(path).endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            for obj in json.load(fh):
                row = ResultRow(dataset=obj["dataset"], flavor=obj["flavor"],
                                sweep=int(obj["sweep"]), fold=_parse_fold(obj["fold"]),
                                error=obj.get("error"))
                for c in _FLOAT_COLUMNS:
                    v = obj.get(c)
                    setattr(row, c, math.nan if v is None else float(v))
                rows.append(row)
        return rows
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ParameterError(f"{path}: unexpected header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            row = ResultRow(dataset=cells[0], flavor=cells[1], sweep=int(cells[2]),
                            fold=_parse_fold(cells[3]))
            for c, cell in zip(_FLOAT_COLUMNS, cells[4:]):
                setattr(row, c, float(cell))
            rows.append(row)
    return rows


def _parse_fold(value) -> Union[int, str]:
    if isinstance(value, int):
        return value
    return value if value == "mean" else int(value)
