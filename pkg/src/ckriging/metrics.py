"""Quality measures for probabilistic regression plus a k-fold splitter.

All metrics standardize against the spread of the true targets, so scores
are comparable across datasets of very different scales.  ``msll``
additionally grades the predictive *distribution*: overconfident wrong
predictions (small stated variance, large error) are punished harder than
honest uncertain ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, ParameterError, ShapeError, UndefinedMetricError

__all__ = ["EvalReport", "kfold_split", "msll", "r2_score", "smse"]


@dataclass(frozen=True)
class EvalReport:
    """One evaluation cell: quality scores plus wall-clock timings."""

    r2: float
    smse: float
    msll: float
    fit_time_s: float
    predict_time_s: float


def _check_pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.shape != y_pred.shape:
        raise ShapeError(f"length mismatch: {y_true.shape[0]} vs {y_pred.shape[0]}")
    if y_true.shape[0] < 2:
        raise ShapeError("metrics need at least 2 points")
    if np.ptp(y_true) == 0.0:
        raise UndefinedMetricError("targets are constant; score is undefined")
    return y_true, y_pred


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination; 1.0 is a perfect fit."""
    y_true, y_pred = _check_pair(y_true, y_pred)
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    return 1.0 - ss_res / ss_tot


def smse(y_true, y_pred) -> float:
    """Mean squared error over the variance of the true targets.

    With both standardized by the test-set variance this is exactly
    ``1 - r2_score``.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    mse = float(np.mean((y_true - y_pred) ** 2))
    return mse / float(np.var(y_true))


def msll(y_true, pred_mean, pred_var, train_mean: float, train_var: float,
         variant: str = "nll") -> float:
    """Mean standardized log loss against a trivial mean/variance predictor.

    Per point, the Gaussian negative log density of the truth under the
    prediction, minus the same under a predictor that always states the
    training mean and variance.  Negative is better than trivial; zero
    means no better.  ``variant="legacy"`` selects an alternative
    historical form, 0.5*log(pi*v + e^2/v), kept for comparison only.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    pred_mean = np.asarray(pred_mean, dtype=float).ravel()
    pred_var = np.asarray(pred_var, dtype=float).ravel()
    if not (y_true.shape == pred_mean.shape == pred_var.shape):
        raise ShapeError("y_true, pred_mean and pred_var must share a length")
    if np.any(pred_var <= 0.0):
        raise InputError("predictive variances must be > 0")
    if train_var <= 0.0:
        raise InputError("trivial-model variance must be > 0")
    if variant == "nll":
        loss = 0.5 * np.log(2.0 * np.pi * pred_var) + (y_true - pred_mean) ** 2 / (2.0 * pred_var)
        triv = 0.5 * np.log(2.0 * np.pi * train_var) + (y_true - train_mean) ** 2 / (2.0 * train_var)
    elif variant == "legacy":
        loss = 0.5 * np.log(np.pi * pred_var + (y_true - pred_mean) ** 2 / pred_var)
        triv = 0.5 * np.log(np.pi * train_var + (y_true - train_mean) ** 2 / train_var)
    else:
        raise ParameterError(f"variant must be 'nll' or 'legacy', got {variant!r}")
    return float(np.mean(loss - triv))


def kfold_split(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Fold index per row: a seeded shuffle cut into near-equal chunks.

    Fold sizes differ by at most one; same seed, same assignment.
    """
    if folds < 2 or folds > n:
        raise ParameterError(f"folds must be in [2, {n}], got {folds}")
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=int)
    base = n // folds
    extra = n % folds
    start = 0
    for f in range(folds):
        size = base + (1 if f < extra else 0)
        out[perm[start : start + size]] = f
        start += size
    return out
