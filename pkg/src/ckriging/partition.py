"""Partitioning of a dataset into clusters for local model fitting.

Four partitioners are provided: K-means (hard), fuzzy C-means and Gaussian
mixtures (soft, with a top-membership overlap assignment), and a
variance-reduction regression tree grown best-first so the number of
leaves is controlled exactly.  All of them are deterministic under a
fixed seed, and every fitted artifact is immutable afterwards so it can
be shared freely at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .exceptions import ParameterError, ShapeError
from .gp import Dataset

__all__ = [
    "GaussianMixture",
    "Partitioning",
    "RegressionTree",
    "TreeNode",
    "fcm_memberships",
    "gmm_fit",
    "gmm_membership",
    "kmeans_partition",
    "overlap_assign",
    "tree_partition",
    "tree_route",
]

_MAX_ITER = 300


@dataclass(frozen=True)
class Partitioning:
    """k index sets over the rows of a dataset plus the assignment artifact.

    ``clusters`` always covers every row; hard partitioners keep the sets
    disjoint while soft ones may overlap.  ``assigner`` is whatever object
    routes new points at prediction time (centroids, a mixture model, or
    a regression tree); it may be None for trivial partitions.
    """

    k: int
    clusters: List[np.ndarray]
    assigner: object = None

    def __post_init__(self):
        if self.k != len(self.clusters):
            raise ParameterError(f"k={self.k} but {len(self.clusters)} clusters given")
        for j, idx in enumerate(self.clusters):
            if len(idx) == 0:
                raise ParameterError(f"cluster {j} is empty")

    def validate_cover(self, n: int, disjoint: bool = False):
        seen = np.concatenate(self.clusters)
        if not np.array_equal(np.unique(seen), np.arange(n)):
            raise ParameterError("clusters do not cover all rows")
        if disjoint and len(seen) != n:
            raise ParameterError("clusters overlap but were required to be disjoint")


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------


def _init_centroids(X: np.ndarray, k: int, rng, plusplus: bool) -> np.ndarray:
    n = X.shape[0]
    if not plusplus:
        return X[rng.choice(n, size=k, replace=False)].copy()
    # k-means++: spread the seeds out by squared-distance weighting
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = cdist(X, centroids[:1], "sqeuclidean").ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centroids[j] = X[rng.integers(n)]
        else:
            centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, cdist(X, centroids[j : j + 1], "sqeuclidean").ravel())
    return centroids


def kmeans_wcss(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Within-cluster sum of squares for a given assignment."""
    return float(np.sum((X - centroids[labels]) ** 2))


def kmeans_partition(data: Dataset, k: int, seed: int = 0,
                     plusplus: bool = False) -> Partitioning:
    """Lloyd's algorithm to a local minimum of the within-cluster sum of squares.

    Empty clusters are repaired by stealing the point currently farthest
    from its own centroid.  Deterministic for a fixed seed.
    """
    X = data.X
    n = data.n
    if k < 1 or k > n:
        raise ParameterError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = _init_centroids(X, k, rng, plusplus)
    labels = None
    trace = []
    for _ in range(_MAX_ITER):
        d2 = cdist(X, centroids, "sqeuclidean")
        new_labels = np.argmin(d2, axis=1)
        # repair empties: move the globally worst-assigned point over
        for j in range(k):
            if not np.any(new_labels == j):
                own = d2[np.arange(n), new_labels]
                # never steal from a singleton cluster
                counts = np.bincount(new_labels, minlength=k)
                own = np.where(counts[new_labels] > 1, own, -np.inf)
                new_labels[int(np.argmax(own))] = j
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centroids[j] = X[labels == j].mean(axis=0)
        trace.append(kmeans_wcss(X, centroids, labels))
    clusters = [np.flatnonzero(labels == j) for j in range(k)]
    assigner = KMeansAssigner(centroids=centroids, wcss_trace=np.asarray(trace))
    return Partitioning(k=k, clusters=clusters, assigner=assigner)


@dataclass(frozen=True)
class KMeansAssigner:
    centroids: np.ndarray
    wcss_trace: np.ndarray = field(default=None, compare=False)

    def assign(self, Q: np.ndarray) -> np.ndarray:
        return np.argmin(cdist(np.atleast_2d(Q), self.centroids, "sqeuclidean"), axis=1)


# ---------------------------------------------------------------------------
# Fuzzy C-means
# ---------------------------------------------------------------------------


def _fcm_update_memberships(X, centroids, m):
    """Membership of each point in each cluster from centroid distances.

    A point sitting exactly on a centroid gets crisp membership there
    (the limit of the update rule as the distance goes to zero).
    """
    dist = cdist(X, centroids)
    W = np.zeros((X.shape[0], centroids.shape[0]))
    dmin = dist.min(axis=1, keepdims=True)
    zero_rows = np.flatnonzero(dmin.ravel() == 0.0)
    power = 2.0 / (m - 1.0)
    ok = np.flatnonzero(dmin.ravel() > 0.0)
    if len(ok):
        # scale by the row minimum so the powers stay in (0, 1]
        inv = (dmin[ok] / dist[ok]) ** power
        W[ok] = inv / inv.sum(axis=1, keepdims=True)
    for i in zero_rows:
        W[i, int(np.argmin(dist[i]))] = 1.0
    return W


def fcm_objective(X, centroids, W, m) -> float:
    """Weighted within-cluster sum of squares with fuzzified memberships."""
    d2 = cdist(X, centroids, "sqeuclidean")
    return float(np.sum((W ** m) * d2))


def fcm_memberships(data: Dataset, k: int, m: float = 2.0, seed: int = 0,
                    tol: float = 1e-5):
    """Fuzzy C-means: returns (membership matrix, centroids).

    Alternates membership and weighted-centroid updates until the largest
    membership change drops below ``tol`` (or 300 iterations).  Rows of
    the membership matrix sum to one.
    """
    if k < 2:
        raise ParameterError(f"fuzzy clustering needs k >= 2, got k={k}")
    if m <= 1.0:
        raise ParameterError(f"fuzzifier must be > 1, got {m}")
    if k > data.n:
        raise ParameterError(f"k={k} exceeds n={data.n}")
    X = data.X
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(data.n, size=k, replace=False)].copy()
    W = _fcm_update_memberships(X, centroids, m)
    for _ in range(_MAX_ITER):
        Wm = W ** m
        weight_sums = Wm.sum(axis=0)
        # a cluster that lost all mass is re-seeded on a random point
        for j in np.where(weight_sums == 0.0)[0]:
            centroids[j] = X[rng.integers(data.n)]
        good = weight_sums > 0.0
        centroids[good] = (Wm.T[good] @ X) / weight_sums[good, None]
        W_new = _fcm_update_memberships(X, centroids, m)
        delta = np.abs(W_new - W).max()
        W = W_new
        if delta < tol:
            break
    return W, centroids


@dataclass(frozen=True)
class FcmAssigner:
    centroids: np.ndarray
    fuzzifier: float

    def memberships(self, Q: np.ndarray) -> np.ndarray:
        return _fcm_update_memberships(np.atleast_2d(Q), self.centroids, self.fuzzifier)


# ---------------------------------------------------------------------------
# Overlap assignment for soft clusterings
# ---------------------------------------------------------------------------


def overlap_assign(W: np.ndarray, o: float, assigner: object = None) -> Partitioning:
    """Turn memberships into (possibly overlapping) clusters.

    Each cluster receives the ``min(n, round_half_up(n*o/k))`` rows with
    the largest membership in it, ties broken toward the lower row index.
    Rows that end up in no cluster are added to their argmax cluster, so
    the union always covers every row.  ``o`` runs from 1.0 (no overlap)
    to 2.0 (every cluster holds everything when k = 2).
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ShapeError(f"membership matrix must be 2-d, got shape {W.shape}")
    if not 1.0 <= o <= 2.0:
        raise ParameterError(f"overlap factor must lie in [1.0, 2.0], got {o}")
    n, k = W.shape
    size = min(n, int(np.floor(n * o / k + 0.5)))  # round half up, capped at n
    clusters = []
    for j in range(k):
        # stable sort descending with index tie-break: sort on (-w, index)
        order = np.lexsort((np.arange(n), -W[:, j]))
        clusters.append(np.sort(order[:size]))
    covered = np.zeros(n, dtype=bool)
    for idx in clusters:
        covered[idx] = True
    orphans = np.flatnonzero(~covered)
    if len(orphans):
        best = np.argmax(W[orphans], axis=1)
        for row, j in zip(orphans, best):
            clusters[j] = np.sort(np.append(clusters[j], row))
    part = Partitioning(k=k, clusters=clusters, assigner=assigner)
    part.validate_cover(n)
    return part


# ---------------------------------------------------------------------------
# Gaussian mixture model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianMixture:
    """Fitted mixture: component weights, means, and covariances.

    ``covariances`` is (k, d, d) for full mode and (k, d) for diagonal
    mode.  ``ll_trace`` records the total log likelihood per EM iteration.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    covariance_type: str
    ll_trace: np.ndarray = field(default=None, compare=False)

    @property
    def k(self) -> int:
        return self.means.shape[0]


def _log_gauss(X, mean, cov, covariance_type):
    """Log density of one Gaussian component at each row of X."""
    d = X.shape[1]
    diff = X - mean
    if covariance_type == "diagonal":
        var = cov
        quad = np.sum(diff * diff / var, axis=1)
        logdet = float(np.sum(np.log(var)))
    else:
        L = cholesky(cov, lower=True)
        sol = solve_triangular(L, diff.T, lower=True)
        quad = np.sum(sol * sol, axis=0)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * (quad + logdet + d * np.log(2.0 * np.pi))


def _gmm_log_resp(X, weights, means, covs, covariance_type):
    """Log responsibilities and per-point log likelihood."""
    n, k = X.shape[0], means.shape[0]
    logp = np.empty((n, k))
    for j in range(k):
        logp[:, j] = np.log(weights[j]) + _log_gauss(X, means[j], covs[j], covariance_type)
    mx = logp.max(axis=1, keepdims=True)
    lse = mx.ravel() + np.log(np.exp(logp - mx).sum(axis=1))
    return logp - lse[:, None], lse


def _collapsed(cov, covariance_type) -> bool:
    if covariance_type == "diagonal":
        return bool(np.any(cov <= 0.0) or float(np.prod(cov)) < 1e-300)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or logdet < np.log(1e-300):
        return True
    try:
        cholesky(cov, lower=True)
    except LinAlgError:
        return True
    return False


def gmm_fit(data: Dataset, k: int, covariance: str = "full", seed: int = 0,
            overlap: float = 1.1, tol: float = 1e-6):
    """Fit a Gaussian mixture by EM and derive an overlapping partitioning.

    Returns ``(GaussianMixture, Partitioning)``.  EM stops when the
    relative log-likelihood improvement falls below ``tol`` (or after 300
    iterations).  A component whose covariance collapses is re-seeded on
    a random point with its covariance diagonal inflated.
    """
    if covariance not in ("full", "diagonal"):
        raise ParameterError(f"covariance must be 'full' or 'diagonal', got {covariance!r}")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if data.n < k:
        raise ParameterError(f"need n >= k, got n={data.n}, k={k}")
    X = data.X
    n, d = X.shape
    rng = np.random.default_rng(seed)

    means = X[rng.choice(n, size=k, replace=False)].copy()
    base_var = np.var(X, axis=0) + 1e-6
    if covariance == "diagonal":
        covs = np.tile(base_var, (k, 1))
    else:
        base = np.cov(X.T, ddof=0) if d > 1 else np.array([[base_var[0]]])
        base = np.atleast_2d(base) + 1e-6 * np.eye(d)
        covs = np.tile(base, (k, 1, 1))
    weights = np.full(k, 1.0 / k)

    trace = []
    prev_ll = -np.inf
    log_resp = None
    for _ in range(_MAX_ITER):
        log_resp, lse = _gmm_log_resp(X, weights, means, covs, covariance)
        ll = float(lse.sum())
        trace.append(ll)
        if np.isfinite(prev_ll) and abs(ll - prev_ll) <= tol * max(1.0, abs(prev_ll)):
            break
        prev_ll = ll
        resp = np.exp(log_resp)
        mass = resp.sum(axis=0)
        weights = mass / n
        for j in range(k):
            if mass[j] < 1e-12:
                means[j] = X[rng.integers(n)]
                covs[j] = covs[j] + (1e-6 if covariance == "diagonal" else 1e-6 * np.eye(d))
                continue
            means[j] = resp[:, j] @ X / mass[j]
            diff = X - means[j]
            if covariance == "diagonal":
                covs[j] = resp[:, j] @ (diff * diff) / mass[j]
            else:
                covs[j] = (resp[:, j, None] * diff).T @ diff / mass[j]
            if _collapsed(covs[j], covariance):
                means[j] = X[rng.integers(n)]
                if covariance == "diagonal":
                    covs[j] = covs[j] + 1e-6
                else:
                    covs[j] = covs[j] + 1e-6 * np.eye(d)
                if _collapsed(covs[j], covariance):
                    covs[j] = base_var.copy() if covariance == "diagonal" else np.diag(base_var)
        weights = np.maximum(weights, 1e-12)
        weights /= weights.sum()

    model = GaussianMixture(
        weights=weights, means=means, covariances=covs,
        covariance_type=covariance, ll_trace=np.asarray(trace),
    )
    resp = np.exp(log_resp)
    if k == 1:
        part = Partitioning(k=1, clusters=[np.arange(n)], assigner=model)
    else:
        part = overlap_assign(resp, overlap, assigner=model)
    return model, part


def gmm_membership(model: GaussianMixture, Q) -> np.ndarray:
    """Posterior component probabilities for each query point; rows sum to 1."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != model.means.shape[1]:
        raise ShapeError(f"queries have dimension {Q.shape[1]}, model expects {model.means.shape[1]}")
    log_resp, _ = _gmm_log_resp(Q, model.weights, model.means,
                                model.covariances, model.covariance_type)
    return np.exp(log_resp)


# ---------------------------------------------------------------------------
# Regression tree
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TreeNode:
    indices: np.ndarray  # training rows at this node
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    leaf_id: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode
    n_leaves: int
    feature_count: int

    def to_dict(self) -> dict:
        def enc(node):
            if node.is_leaf:
                return {"leaf_id": node.leaf_id}
            return {
                "feature": node.feature,
                "threshold": node.threshold,
                "left": enc(node.left),
                "right": enc(node.right),
            }

        return {"n_leaves": self.n_leaves, "feature_count": self.feature_count,
                "root": enc(self.root)}

    @staticmethod
    def from_dict(payload: dict) -> "RegressionTree":
        def dec(obj):
            if "leaf_id" in obj:
                return TreeNode(indices=np.empty(0, dtype=int), leaf_id=obj["leaf_id"])
            return TreeNode(
                indices=np.empty(0, dtype=int),
                feature=obj["feature"], threshold=obj["threshold"],
                left=dec(obj["left"]), right=dec(obj["right"]),
            )

        return RegressionTree(root=dec(payload["root"]), n_leaves=payload["n_leaves"],
                              feature_count=payload["feature_count"])


def _best_split(X, y, idx, min_leaf_size):
    """Best admissible split of one node: (sse_reduction, feature, threshold).

    Candidates are midpoints between consecutive distinct sorted feature
    values; both children must hold at least ``min_leaf_size`` rows and
    the target sum of squares must strictly decrease.  Ties go to the
    lowest feature index, then the lowest threshold.
    """
    ys = y[idx]
    if np.ptp(ys) == 0.0:  # pure node, nothing to gain
        return None
    m = len(idx)
    if m < 2 * min_leaf_size:
        return None
    sse_parent = float(np.sum((ys - ys.mean()) ** 2))
    best = None
    pos = np.arange(min_leaf_size - 1, m - min_leaf_size)
    for f in range(X.shape[1]):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        v = vals[order]
        t = ys[order]
        csum = np.cumsum(t)
        csq = np.cumsum(t * t)
        nl = pos + 1.0
        nr = m - nl
        sse_l = csq[pos] - csum[pos] ** 2 / nl
        sse_r = (csq[-1] - csq[pos]) - (csum[-1] - csum[pos]) ** 2 / nr
        reduction = sse_parent - sse_l - sse_r
        reduction[v[pos] == v[pos + 1]] = -np.inf  # cannot separate equal values
        j = int(np.argmax(reduction))  # first max => lowest threshold
        if reduction[j] <= 0.0:
            continue
        if best is None or reduction[j] > best[0]:
            i = pos[j]
            thr = 0.5 * (v[i] + v[i + 1])
            if thr >= v[i + 1]:  # guard against midpoint rounding up
                thr = float(v[i])
            best = (float(reduction[j]), f, float(thr))
    return best


def tree_partition(data: Dataset, max_leaves: int, min_leaf_size: int = 2):
    """Grow a regression tree best-first and read the leaves as clusters.

    At each step the frontier leaf offering the largest reduction in the
    target sum of squares is split, until ``max_leaves`` leaves exist or
    no admissible split remains.  Returns ``(RegressionTree, Partitioning)``.
    """
    if min_leaf_size < 2:
        raise ParameterError(f"min_leaf_size must be >= 2, got {min_leaf_size}")
    if max_leaves < 1:
        raise ParameterError(f"max_leaves must be >= 1, got {max_leaves}")
    X, y = data.X, data.y
    root = TreeNode(indices=np.arange(data.n))
    leaves = [root]
    # frontier: node -> its best split, computed once per node
    frontier = {}
    split = _best_split(X, y, root.indices, min_leaf_size)
    if split is not None:
        frontier[id(root)] = (split, root)

    while len(leaves) < max_leaves and frontier:
        # largest reduction wins; ties by node creation order (dict order)
        key = max(frontier, key=lambda nid: frontier[nid][0][0])
        (reduction, f, thr), node = frontier.pop(key)
        mask = X[node.indices, f] <= thr
        left = TreeNode(indices=node.indices[mask])
        right = TreeNode(indices=node.indices[~mask])
        node.feature, node.threshold = f, thr
        node.left, node.right = left, right
        leaves.remove(node)
        leaves.extend([left, right])
        for child in (left, right):
            s = _best_split(X, y, child.indices, min_leaf_size)
            if s is not None:
                frontier[id(child)] = (s, child)

    # number the leaves in depth-first order for stable identification
    ordered = []

    def walk(node):
        if node.is_leaf:
            node.leaf_id = len(ordered)
            ordered.append(node)
        else:
            walk(node.left)
            walk(node.right)

    walk(root)
    tree = RegressionTree(root=root, n_leaves=len(ordered), feature_count=data.d)
    clusters = [np.sort(leaf.indices) for leaf in ordered]
    part = Partitioning(k=len(ordered), clusters=clusters, assigner=tree)
    part.validate_cover(data.n, disjoint=True)
    return tree, part


def tree_route(tree: RegressionTree, Q) -> np.ndarray:
    """Leaf index for each query point, by descending threshold comparisons."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != tree.feature_count:
        raise ShapeError(f"queries have dimension {Q.shape[1]}, tree expects {tree.feature_count}")
    out = np.empty(Q.shape[0], dtype=int)
    for i, q in enumerate(Q):
        node = tree.root
        while not node.is_leaf:
            node = node.left if q[node.feature] <= node.threshold else node.right
        out[i] = node.leaf_id
    return out
