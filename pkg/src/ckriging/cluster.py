"""Cluster Kriging: local Kriging models over a partition, combined per query.

Five flavors are provided:

* ``owck``  - K-means partition, inverse-variance (optimal) weighting
* ``owfck`` - fuzzy C-means partition with overlap, optimal weighting
* ``gmmck`` - Gaussian-mixture partition with overlap, membership mixture
* ``mtck``  - regression-tree partition, single routed model per query
* ``sod``   - a single model on a random subset (baseline)

plus ``full`` (a single model on everything) for reference runs.  Fitting
is deterministic under a fixed seed: each cluster derives its own sub-seed
from the master seed and its index, so results do not depend on whether
clusters are fitted sequentially or concurrently.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .exceptions import ParameterError, ShapeError
from .gp import Dataset, FitConfig, KrigingModel, Prediction, build_model
from .gp import fit as gp_fit
from .gp import predict as gp_predict
from .kernel import KernelParams
from .partition import (
    FcmAssigner,
    GaussianMixture,
    KMeansAssigner,
    Partitioning,
    RegressionTree,
    fcm_memberships,
    gmm_fit,
    gmm_membership,
    kmeans_partition,
    overlap_assign,
    tree_partition,
    tree_route,
)

__all__ = [
    "FLAVORS",
    "ClusterConfig",
    "ClusterKrigingModel",
    "CombinedPrediction",
    "ck_fit",
    "ck_predict",
    "cluster_seed",
    "combine_membership",
    "combine_optimal",
    "default_cluster_count",
    "load_model",
    "optimal_weights",
    "save_model",
]

FLAVORS = ("owck", "owfck", "gmmck", "mtck", "sod", "full")

_COMBINERS = {
    "owck": "optimal-weight",
    "owfck": "optimal-weight",
    "gmmck": "membership",
    "mtck": "single-model",
    "sod": "single-model",
    "full": "single-model",
}

# Below this a predictive variance counts as zero for weighting purposes.
_ZERO_VAR = 1e-12


@dataclass(frozen=True)
class ClusterConfig:
    """Partitioner settings shared by the flavors.

    ``gmm_covariance`` may be "full", "diagonal" or "auto" (full up to 10
    input dimensions, diagonal above).  ``subset_size`` only applies to
    the ``sod`` flavor and defaults to min(n, 1000).
    """

    overlap: float = 1.1
    fuzzifier: float = 2.0
    gmm_covariance: str = "auto"
    min_leaf_size: int = 2
    subset_size: Optional[int] = None
    kmeans_plusplus: bool = False
    workers: int = 1


@dataclass(frozen=True)
class CombinedPrediction:
    """Combined mean/variance plus the per-query weight vectors used."""

    mean: np.ndarray
    variance: np.ndarray
    weights: np.ndarray  # (m, k); one-hot for single-model flavors


@dataclass(frozen=True)
class ClusterKrigingModel:
    flavor: str
    partitioning: Partitioning
    models: List[KrigingModel]
    combiner: str
    seed: int
    dim: int

    @property
    def k(self) -> int:
        return self.partitioning.k


def cluster_seed(seed: int, index: int) -> int:
    """Deterministic per-cluster sub-seed, independent of fit scheduling."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def default_cluster_count(n: int) -> int:
    """Smallest k that keeps the average cluster at or under 1000 points."""
    return max(1, math.ceil(n / 1000))


def optimal_weights(variances) -> np.ndarray:
    """Inverse-variance weights, normalized to the simplex.

    Any variance at or below 1e-12 is treated as exactly zero; the whole
    weight mass is then shared uniformly among those entries (the limit
    of the rule as a variance vanishes).
    """
    v = np.asarray(variances, dtype=float)
    if np.any(v < 0.0):
        raise ParameterError("variances must be non-negative")
    zero = v <= _ZERO_VAR
    w = np.zeros_like(v)
    if np.any(zero):
        w[zero] = 1.0 / zero.sum()
        return w
    inv = 1.0 / v
    return inv / inv.sum()


def _optimal_weights_batch(V: np.ndarray) -> np.ndarray:
    """Row-wise optimal weights for an (m, k) variance array."""
    W = np.empty_like(V)
    zero = V <= _ZERO_VAR
    any_zero = zero.any(axis=1)
    if np.any(any_zero):
        W[any_zero] = zero[any_zero] / zero[any_zero].sum(axis=1, keepdims=True)
    ok = ~any_zero
    if np.any(ok):
        inv = 1.0 / V[ok]
        W[ok] = inv / inv.sum(axis=1, keepdims=True)
    return W


def _stack(preds: List[Prediction]):
    means = np.stack([p.mean for p in preds], axis=1)  # (m, k)
    variances = np.stack([p.variance for p in preds], axis=1)
    return means, variances


def _check_weights(W: np.ndarray, k: int):
    if W.ndim != 2 or W.shape[1] != k:
        raise ShapeError(f"weights have shape {W.shape}, expected (m, {k})")
    if np.any(W < -1e-12) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-8):
        raise ParameterError("weights must be non-negative and sum to 1 per query")


def combine_optimal(preds: List[Prediction], weights: np.ndarray) -> CombinedPrediction:
    """Weighted superposition: mean = sum w*m, variance = sum w^2 * s2."""
    means, variances = _stack(preds)
    W = np.asarray(weights, dtype=float)
    _check_weights(W, means.shape[1])
    mean = np.sum(W * means, axis=1)
    var = np.sum(W * W * variances, axis=1)
    return CombinedPrediction(mean=mean, variance=np.maximum(var, 0.0), weights=W)


def combine_membership(preds: List[Prediction], weights: np.ndarray) -> CombinedPrediction:
    """Mixture combination: the variance keeps the between-model dispersion.

    variance = sum_l w_l (s2_l + m_l^2) - (sum_l w_l m_l)^2, clamped at 0.
    """
    means, variances = _stack(preds)
    W = np.asarray(weights, dtype=float)
    _check_weights(W, means.shape[1])
    mean = np.sum(W * means, axis=1)
    second = np.sum(W * (variances + means * means), axis=1)
    var = second - mean * mean
    return CombinedPrediction(mean=mean, variance=np.maximum(var, 0.0), weights=W)


def _partition_for(data: Dataset, flavor: str, k: int, cfg: ClusterConfig,
                   seed: int) -> Partitioning:
    n = data.n
    if flavor in ("sod", "full"):
        if flavor == "full":
            idx = np.arange(n)
        else:
            size = cfg.subset_size if cfg.subset_size is not None else min(n, 1000)
            if not 1 <= size <= n:
                raise ParameterError(f"subset_size must be in [1, {n}], got {size}")
            rng = np.random.default_rng(seed)
            idx = np.sort(rng.choice(n, size=size, replace=False))
        return Partitioning(k=1, clusters=[idx], assigner=None)
    if k == 1:
        # degenerate partition: one cluster holding everything
        if flavor == "gmmck":
            model, part = gmm_fit(data, 1, _gmm_mode(cfg, data.d), seed, cfg.overlap)
            return part
        if flavor == "owck":
            return kmeans_partition(data, 1, seed, cfg.kmeans_plusplus)
        return Partitioning(k=1, clusters=[np.arange(n)], assigner=None)
    if flavor == "owck":
        return kmeans_partition(data, k, seed, cfg.kmeans_plusplus)
    if flavor == "owfck":
        W, centroids = fcm_memberships(data, k, m=cfg.fuzzifier, seed=seed)
        assigner = FcmAssigner(centroids=centroids, fuzzifier=cfg.fuzzifier)
        return overlap_assign(W, cfg.overlap, assigner=assigner)
    if flavor == "gmmck":
        _, part = gmm_fit(data, k, _gmm_mode(cfg, data.d), seed, cfg.overlap)
        return part
    if flavor == "mtck":
        _, part = tree_partition(data, max_leaves=k, min_leaf_size=cfg.min_leaf_size)
        return part
    raise ParameterError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")


def _gmm_mode(cfg: ClusterConfig, d: int) -> str:
    if cfg.gmm_covariance == "auto":
        return "full" if d <= 10 else "diagonal"
    return cfg.gmm_covariance


def ck_fit(data: Dataset, flavor: str, k: Optional[int] = None,
           fit_config: Optional[FitConfig] = None,
           cluster_config: Optional[ClusterConfig] = None,
           seed: int = 0) -> ClusterKrigingModel:
    """Partition the data and fit one Kriging model per cluster.

    ``k`` defaults to the smallest cluster count that keeps clusters at or
    under 1000 points (they should stay above ~100 for stable fits; pick k
    accordingly).  Clusters may be fitted concurrently via
    ``cluster_config.workers``; results are identical either way.
    """
    if flavor not in FLAVORS:
        raise ParameterError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    fit_config = fit_config if fit_config is not None else FitConfig()
    cfg = cluster_config if cluster_config is not None else ClusterConfig()
    if k is None:
        k = 1 if flavor in ("sod", "full") else default_cluster_count(data.n)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")

    part = _partition_for(data, flavor, k, cfg, seed)
    for j, idx in enumerate(part.clusters):
        if len(idx) < 2:
            raise ParameterError(
                f"cluster {j} has {len(idx)} point(s); every cluster needs at least 2"
            )

    subsets = [data.subset(idx) for idx in part.clusters]
    configs = [replace(fit_config, seed=cluster_seed(seed, j)) for j in range(part.k)]
    if cfg.workers > 1 and part.k > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            models = list(pool.map(gp_fit, subsets, configs))
    else:
        models = [gp_fit(sub, c) for sub, c in zip(subsets, configs)]

    return ClusterKrigingModel(
        flavor=flavor, partitioning=part, models=models,
        combiner=_COMBINERS[flavor], seed=seed, dim=data.d,
    )


def ck_predict(model: ClusterKrigingModel, Q) -> CombinedPrediction:
    """Combined prediction at a batch of query points."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q.reshape(-1, 1) if model.dim == 1 else Q.reshape(1, -1)
    if Q.ndim != 2 or Q.shape[1] != model.dim:
        raise ShapeError(f"queries have shape {Q.shape}, expected (m, {model.dim})")
    m = Q.shape[0]
    k = model.k

    if model.combiner == "single-model":
        if isinstance(model.partitioning.assigner, RegressionTree):
            leaves = tree_route(model.partitioning.assigner, Q)
            mean = np.empty(m)
            var = np.empty(m)
            W = np.zeros((m, k))
            for leaf in np.unique(leaves):
                rows = np.flatnonzero(leaves == leaf)
                pred = gp_predict(model.models[leaf], Q[rows])
                mean[rows] = pred.mean
                var[rows] = pred.variance
                W[rows, leaf] = 1.0
            return CombinedPrediction(mean=mean, variance=var, weights=W)
        pred = gp_predict(model.models[0], Q)
        return CombinedPrediction(mean=pred.mean, variance=pred.variance,
                                  weights=np.ones((m, 1)))

    preds = [gp_predict(sub, Q) for sub in model.models]
    if model.combiner == "membership":
        assigner = model.partitioning.assigner
        if isinstance(assigner, GaussianMixture):
            W = gmm_membership(assigner, Q)
        else:  # degenerate single cluster
            W = np.ones((m, k))
        return combine_membership(preds, W)

    # optimal-weight path
    _, variances = _stack(preds)
    W = _optimal_weights_batch(variances)
    return combine_optimal(preds, W)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_FORMAT = "ckriging-model"
_VERSION = 1


def _encode_assigner(assigner) -> dict:
    if assigner is None:
        return {"type": "none"}
    if isinstance(assigner, KMeansAssigner):
        return {"type": "kmeans", "centroids": assigner.centroids.tolist()}
    if isinstance(assigner, FcmAssigner):
        return {"type": "fcm", "centroids": assigner.centroids.tolist(),
                "fuzzifier": assigner.fuzzifier}
    if isinstance(assigner, GaussianMixture):
        return {
            "type": "gmm",
            "weights": assigner.weights.tolist(),
            "means": assigner.means.tolist(),
            "covariances": assigner.covariances.tolist(),
            "covariance_type": assigner.covariance_type,
        }
    if isinstance(assigner, RegressionTree):
        return {"type": "tree", **assigner.to_dict()}
    raise ParameterError(f"cannot serialize assigner of type {type(assigner).__name__}")


def _decode_assigner(payload: dict):
    kind = payload["type"]
    if kind == "none":
        return None
    if kind == "kmeans":
        return KMeansAssigner(centroids=np.asarray(payload["centroids"]))
    if kind == "fcm":
        return FcmAssigner(centroids=np.asarray(payload["centroids"]),
                           fuzzifier=payload["fuzzifier"])
    if kind == "gmm":
        return GaussianMixture(
            weights=np.asarray(payload["weights"]),
            means=np.asarray(payload["means"]),
            covariances=np.asarray(payload["covariances"]),
            covariance_type=payload["covariance_type"],
        )
    if kind == "tree":
        return RegressionTree.from_dict(payload)
    raise ParameterError(f"unknown assigner type {kind!r} in model file")


def save_model(model: ClusterKrigingModel, path) -> None:
    """Write a versioned, self-describing JSON snapshot of the model.

    The file carries the flavor, the partitioner artifact, and for each
    cluster its training rows and fitted kernel parameters; loading
    re-factorizes each cluster, which reproduces predictions bit-exactly.
    """
    clusters = []
    for idx, sub in zip(model.partitioning.clusters, model.models):
        clusters.append({
            "indices": [int(i) for i in idx],
            "X": sub.data.X.tolist(),
            "y": sub.data.y.tolist(),
            "params": {
                "theta": sub.params.theta.tolist(),
                "sigma2_eps": sub.params.sigma2_eps,
                "sigma2_gamma": sub.params.sigma2_gamma,
            },
            "mu_hat": sub.mu_hat,
        })
    payload = {
        "format": _FORMAT,
        "version": _VERSION,
        "flavor": model.flavor,
        "combiner": model.combiner,
        "seed": model.seed,
        "dim": model.dim,
        "k": model.k,
        "assigner": _encode_assigner(model.partitioning.assigner),
        "clusters": clusters,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> ClusterKrigingModel:
    """Load a model written by :func:`save_model`."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != _FORMAT:
        raise ParameterError(f"{path}: not a {_FORMAT} file")
    if payload.get("version") != _VERSION:
        raise ParameterError(f"{path}: unsupported version {payload.get('version')}")
    models = []
    clusters = []
    for entry in payload["clusters"]:
        params = KernelParams(
            theta=np.asarray(entry["params"]["theta"]),
            sigma2_eps=entry["params"]["sigma2_eps"],
            sigma2_gamma=entry["params"]["sigma2_gamma"],
        )
        ds = Dataset(np.asarray(entry["X"]), np.asarray(entry["y"]))
        models.append(build_model(ds, params))
        clusters.append(np.asarray(entry["indices"], dtype=int))
    part = Partitioning(k=payload["k"], clusters=clusters,
                        assigner=_decode_assigner(payload["assigner"]))
    return ClusterKrigingModel(
        flavor=payload["flavor"], partitioning=part, models=models,
        combiner=payload["combiner"], seed=payload["seed"], dim=payload["dim"],
    )
