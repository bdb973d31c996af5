"""Stationary Gaussian (squared exponential) covariance function.

The kernel is anisotropic with one inverse-squared length scale per input
dimension:

    k(x, x') = sigma2_eps * prod_i exp(-theta_i * (x_i - x'_i)^2)

``theta`` lives on the natural scale here; the fitting code in
:mod:`ckriging.gp` works in log space internally so positivity never has to
be enforced by the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InputError, ShapeError

__all__ = ["KernelParams", "kernel_eval", "kernel_matrix"]

# Scaled squared distances beyond this yield covariances < 2e-22 * sigma2_eps.
# They are flushed to exact zero: far below every tolerance in the package,
# and it keeps subnormal values out of the downstream factorizations (which
# slow BLAS down by orders of magnitude).
FLUSH_SQDIST = 50.0


@dataclass(frozen=True)
class KernelParams:
    """Hyper-parameters of the Gaussian covariance function.

    Attributes
    ----------
    theta : ndarray, shape (d,)
        Positive per-dimension weights (1 / input-unit^2).
    sigma2_eps : float
        Process variance (target-unit^2); the covariance of a point with
        itself, excluding noise.
    sigma2_gamma : float
        Homoscedastic noise (nugget) variance added to the covariance
        diagonal; must be >= 0.
    """

    theta: np.ndarray
    sigma2_eps: float
    sigma2_gamma: float = 0.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.ndim != 1:
            raise ShapeError(f"theta must be a vector, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0.0):
            raise InputError("all theta entries must be finite and > 0")
        if not (np.isfinite(self.sigma2_eps) and self.sigma2_eps > 0.0):
            raise InputError(f"sigma2_eps must be finite and > 0, got {self.sigma2_eps}")
        if not (np.isfinite(self.sigma2_gamma) and self.sigma2_gamma >= 0.0):
            raise InputError(f"sigma2_gamma must be finite and >= 0, got {self.sigma2_gamma}")
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return self.theta.shape[0]


def _as_points(A, d: int, name: str) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be a 2-d point array, got shape {A.shape}")
    if A.shape[1] != d:
        raise ShapeError(f"{name} has dimension {A.shape[1]}, kernel expects {d}")
    return A


def kernel_eval(params: KernelParams, x, x_other) -> float:
    """Covariance between two points; symmetric, in (0, sigma2_eps]."""
    x = np.asarray(x, dtype=float).ravel()
    x_other = np.asarray(x_other, dtype=float).ravel()
    if x.shape[0] != params.dim or x_other.shape[0] != params.dim:
        raise ShapeError(
            f"points have dimensions {x.shape[0]} and {x_other.shape[0]}, "
            f"kernel expects {params.dim}"
        )
    diff = x - x_other
    return float(params.sigma2_eps * np.exp(-np.dot(params.theta, diff * diff)))


def kernel_matrix(params: KernelParams, A, B) -> np.ndarray:
    """Cross-covariance matrix between two point sets.

    Entry (i, j) is ``kernel_eval(params, A[i], B[j])``.  When ``A is B``
    the result is symmetric with ``sigma2_eps`` on the diagonal.  The
    nugget is *not* added here.
    """
    A = _as_points(A, params.dim, "A")
    B = _as_points(B, params.dim, "B")
    root = np.sqrt(params.theta)
    # cdist evaluates sum((a-b)^2) pairwise, so scaling rows by sqrt(theta)
    # yields the weighted squared distance sum_i theta_i (a_i - b_i)^2.
    sq = cdist(A * root, B * root, metric="sqeuclidean")
    sq[sq > FLUSH_SQDIST] = np.inf
    return params.sigma2_eps * np.exp(-sq)
