"""Cluster Kriging: Gaussian process regression at scale via local models.

The library splits a dataset into clusters, fits an Ordinary Kriging model
per cluster, and combines the local posteriors at prediction time --
either by inverse-variance weighting, by cluster-membership mixtures, or
by routing each query to a single model.  A benchmark CLI (``ckriging``)
sweeps the flavors over synthetic or CSV datasets with k-fold
cross-validation and reports R\u00b2, SMSE and MSLL together with timings.
"""

from .cluster import (
    FLAVORS,
    ClusterConfig,
    ClusterKrigingModel,
    CombinedPrediction,
    ck_fit,
    ck_predict,
    cluster_seed,
    combine_membership,
    combine_optimal,
    default_cluster_count,
    load_model,
    optimal_weights,
    save_model,
)
from .exceptions import (
    CkrigingError,
    ConditioningError,
    InputError,
    ParameterError,
    ShapeError,
    UndefinedMetricError,
)
from .functions import FUNCTIONS, function_domain, synth_dataset
from .gp import (
    Dataset,
    FitConfig,
    KrigingModel,
    Prediction,
    build_model,
    fit,
    log_marginal_likelihood,
    predict,
)
from .kernel import KernelParams, kernel_eval, kernel_matrix
from .metrics import EvalReport, kfold_split, msll, r2_score, smse
from .partition import (
    GaussianMixture,
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

__version__ = "0.1.0"
