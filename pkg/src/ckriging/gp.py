"""Ordinary Kriging on a single dataset.

A model carries a constant trend ``mu_hat`` estimated from the data, a
Gaussian-kernel covariance over the training inputs, and an additive
homoscedastic noise (nugget) term.  Hyper-parameters are fitted by
multi-start maximum likelihood over log-scale coordinates; the posterior
mean and variance at query points come out in closed form from the
Cholesky factor of the regularized covariance matrix.  No explicit matrix
inverse is ever formed on the prediction path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.linalg.blas import dger
from scipy.linalg.lapack import dpotrf, dpotri, dpotrs
from scipy.optimize import minimize
from threadpoolctl import threadpool_limits

from .exceptions import ConditioningError, InputError, ParameterError, ShapeError
from .kernel import FLUSH_SQDIST, KernelParams, kernel_matrix

__all__ = [
    "Dataset",
    "FitConfig",
    "KrigingModel",
    "Prediction",
    "build_model",
    "fit",
    "log_marginal_likelihood",
    "predict",
]

_CHOL_FAILED = 1e25  # objective value returned to the optimizer when a candidate is not PD

# Auto-escalation ladder for the nugget: start tiny, grow by 10x on
# factorization failure, give up past 1e-2.
_NUGGET_LADDER = tuple(10.0 ** e for e in range(-10, -1))


@dataclass(frozen=True)
class Dataset:
    """Training data: an (n, d) input matrix and an n-vector of targets."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-d, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1:
            raise ShapeError("dataset must contain at least one point")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise InputError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


@dataclass(frozen=True)
class FitConfig:
    """Controls for maximum-likelihood hyper-parameter fitting.

    ``nugget`` is either a fixed value (float, >= 0), ``"optimize"`` to
    search over it jointly in log space, or ``"auto"`` to start at 1e-10
    and escalate tenfold whenever factorization fails, up to 1e-2.
    """

    log_theta_bounds: tuple[float, float] = (-10.0, 10.0)
    log_sigma2_bounds: Optional[tuple[float, float]] = None  # default: centered on log var(y)
    restarts: int = 5
    nugget: Union[float, str] = "auto"
    isotropic: bool = False
    seed: int = 0
    max_iter: int = 100

    def __post_init__(self):
        if isinstance(self.nugget, str):
            if self.nugget not in ("auto", "optimize"):
                raise ParameterError(f"nugget must be 'auto', 'optimize' or a value, got {self.nugget!r}")
        elif not (np.isfinite(self.nugget) and self.nugget >= 0.0):
            raise ParameterError(f"fixed nugget must be finite and >= 0, got {self.nugget}")
        if self.restarts < 1:
            raise ParameterError("restarts must be >= 1")
        lo, hi = self.log_theta_bounds
        if not lo < hi:
            raise ParameterError("log_theta_bounds must satisfy lo < hi")


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and variance per query point."""

    mean: np.ndarray
    variance: np.ndarray


@dataclass(frozen=True)
class KrigingModel:
    """A fitted Ordinary Kriging model.

    ``chol`` is the lower Cholesky factor of K = Sigma + sigma2_gamma*I,
    ``alpha`` solves K a = y - mu_hat, ``beta`` solves K b = 1, and
    ``mu_hat`` is the estimated constant trend.
    """

    data: Dataset
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    mu_hat: float
    log_likelihood: float
    fit_config: Optional[FitConfig] = field(default=None, compare=False)


def _factorize(data: Dataset, params: KernelParams):
    """Cholesky-factorize the regularized covariance and solve the trend system.

    Returns (L, mu_hat, alpha, beta, lml).  Raises ConditioningError when
    the matrix is numerically not positive definite.  Runs on one BLAS
    thread so the factorization is reproducible bit for bit regardless of
    the caller's threading environment.
    """
    if params.dim != data.d:
        raise ShapeError(f"kernel dimension {params.dim} != data dimension {data.d}")
    n = data.n
    K = kernel_matrix(params, data.X, data.X)
    if params.sigma2_gamma > 0.0:
        K[np.diag_indices_from(K)] += params.sigma2_gamma
    with threadpool_limits(limits=1):
        try:
            L = cholesky(K, lower=True)
        except LinAlgError as exc:
            raise ConditioningError(
                f"covariance matrix for n={n} points is not positive definite "
                f"(theta={np.array2string(params.theta, precision=4)}, "
                f"sigma2_gamma={params.sigma2_gamma:g})"
            ) from exc
        ones = np.ones(n)
        beta = cho_solve((L, True), ones)
        kinv_y = cho_solve((L, True), data.y)
        mu_hat = float(ones @ kinv_y) / float(ones @ beta)
        resid = data.y - mu_hat
        alpha = cho_solve((L, True), resid)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    lml = -0.5 * float(resid @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
    return L, mu_hat, alpha, beta, lml


def log_marginal_likelihood(data: Dataset, params: KernelParams) -> float:
    """Log marginal likelihood of the data under the given hyper-parameters.

    The constant trend is profiled out at its closed-form optimum, and the
    quadratic form and log-determinant are evaluated through the Cholesky
    factor.
    """
    return _factorize(data, params)[4]


def build_model(data: Dataset, params: KernelParams,
                fit_config: Optional[FitConfig] = None) -> KrigingModel:
    """Assemble a KrigingModel at fixed hyper-parameters (no optimization)."""
    L, mu_hat, alpha, beta, lml = _factorize(data, params)
    return KrigingModel(
        data=data, params=params, chol=L, alpha=alpha, beta=beta,
        mu_hat=mu_hat, log_likelihood=lml, fit_config=fit_config,
    )


def predict(model: KrigingModel, Q) -> Prediction:
    """Posterior mean and variance at a batch of query points.

    The variance includes the trend-estimation correction term
    (1 - c^T K^-1 1)^2 / (1^T K^-1 1); tiny negative round-off is clamped
    to zero.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 1:
        Q = Q.reshape(-1, 1) if model.data.d == 1 else Q.reshape(1, -1)
    if Q.ndim != 2 or Q.shape[1] != model.data.d:
        raise ShapeError(f"queries have shape {Q.shape}, expected (m, {model.data.d})")
    p = model.params
    C = kernel_matrix(p, model.data.X, Q)  # n x m
    mean = model.mu_hat + C.T @ model.alpha
    v = solve_triangular(model.chol, C, lower=True)
    quad = np.einsum("ij,ij->j", v, v)
    trend_num = (1.0 - C.T @ model.beta) ** 2
    trend_den = float(np.sum(model.beta))
    var = p.sigma2_gamma + p.sigma2_eps - quad + trend_num / trend_den
    return Prediction(mean=mean, variance=np.maximum(var, 0.0))


class _Objective:
    """Negative profiled log likelihood and its gradient in log coordinates.

    Coordinates are [log theta_1..d] ([log theta] when isotropic), then
    [log sigma2_eps], then optionally [log sigma2_gamma].  Squared
    coordinate differences are precomputed once per fit and stacked as a
    (n_theta, n*n) matrix so the per-coordinate trace terms reduce to one
    BLAS matrix-vector product.

    The optimizer calls this hundreds of times, so every O(n^2) workspace
    is preallocated and the LAPACK routines run in place on Fortran-order
    buffers; per-call heap traffic is limited to O(n) vectors.
    """

    def __init__(self, data: Dataset, isotropic: bool, fixed_nugget: Optional[float]):
        self.y = data.y
        self.n, self.d = data.X.shape
        self.isotropic = isotropic
        self.fixed_nugget = fixed_nugget  # None => nugget is a search coordinate
        X = data.X
        n = self.n
        if isotropic:
            self.n_theta = 1
            self.sqdiffs = np.zeros((1, n * n))
            for i in range(self.d):
                diff = X[:, i, None] - X[None, :, i]
                self.sqdiffs[0] += (diff * diff).ravel()
        else:
            self.n_theta = self.d
            self.sqdiffs = np.empty((self.d, n * n))
            for i in range(self.d):
                diff = X[:, i, None] - X[None, :, i]
                self.sqdiffs[i] = (diff * diff).ravel()
        # Workspaces.  self.K is Fortran-order so dpotrf/dpotri run in place.
        self.w = np.empty(n * n)
        self.K = np.empty((n, n), order="F")
        self.P = np.empty((n, n))
        self.flush_mask = np.empty(n * n, dtype=bool)
        self.upper = np.triu(np.ones((n, n), dtype=bool), 1)
        self.rhs = np.empty((n, 2), order="F")
        self.alpha = np.empty(n)
        self.grad_theta = np.empty(self.n_theta)

    def unpack(self, x: np.ndarray) -> KernelParams:
        theta = np.exp(x[: self.n_theta])
        if self.isotropic:
            theta = np.full(self.d, theta[0])
        s2e = float(np.exp(x[self.n_theta]))
        s2g = self.fixed_nugget if self.fixed_nugget is not None else float(np.exp(x[self.n_theta + 1]))
        return KernelParams(theta=theta, sigma2_eps=s2e, sigma2_gamma=s2g)

    def _fail(self, x):
        return _CHOL_FAILED, np.zeros_like(x)

    def __call__(self, x: np.ndarray):
        thetas = np.exp(x[: self.n_theta])
        s2e = np.exp(x[self.n_theta])
        s2g = self.fixed_nugget if self.fixed_nugget is not None else np.exp(x[self.n_theta + 1])
        n = self.n

        # Sig = s2e * exp(-sum_i theta_i * sqdiff_i), tiny entries flushed to 0.
        np.dot(thetas, self.sqdiffs, out=self.w)
        np.greater(self.w, FLUSH_SQDIST, out=self.flush_mask)
        np.negative(self.w, out=self.w)
        np.exp(self.w, out=self.w)
        np.copyto(self.w, 0.0, where=self.flush_mask)
        self.w *= s2e
        Sig = self.w.reshape(n, n)

        np.copyto(self.K, Sig)
        if s2g > 0.0:
            self.K.flat[:: n + 1] += s2g
        L, info = dpotrf(self.K, lower=1, clean=0, overwrite_a=1)
        if info != 0:
            return self._fail(x)

        logdet = 2.0 * float(np.sum(np.log(L.flat[:: n + 1])))
        self.rhs[:, 0] = 1.0
        self.rhs[:, 1] = self.y
        sol, info = dpotrs(L, self.rhs, lower=1, overwrite_b=1)
        if info != 0:
            return self._fail(x)
        beta, kinv_y = sol[:, 0], sol[:, 1]
        beta_sum = float(beta.sum())
        mu = float(kinv_y.sum()) / beta_sum
        # alpha = K^-1 (y - mu*1) = kinv_y - mu*beta
        np.multiply(beta, -mu, out=self.alpha)
        self.alpha += kinv_y
        quad = float(self.y @ self.alpha) - mu * float(self.alpha.sum())
        lml = -0.5 * quad - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)
        if not np.isfinite(lml):
            return self._fail(x)

        # d lml / d phi = 0.5 * tr((alpha alpha^T - K^-1) dK/dphi); the trend
        # estimate sits at its own optimum, so no extra term appears.
        kinv_tri, info = dpotri(L, lower=1, overwrite_c=1)
        if info != 0:
            return self._fail(x)
        kinv_trace = float(kinv_tri.flat[:: n + 1].sum())
        np.copyto(self.P, kinv_tri)
        np.copyto(self.P, kinv_tri.T, where=self.upper)  # mirror lower triangle
        np.negative(self.P, out=self.P)
        dger(1.0, self.alpha, self.alpha, a=self.P.T, overwrite_a=1)  # P += alpha alpha^T
        self.P *= Sig
        np.dot(self.sqdiffs, self.P.ravel(), out=self.grad_theta)

        grad = np.empty_like(x)
        grad[: self.n_theta] = -0.5 * thetas * self.grad_theta
        grad[self.n_theta] = 0.5 * float(self.P.sum())
        if self.fixed_nugget is None:
            grad[self.n_theta + 1] = 0.5 * s2g * (float(self.alpha @ self.alpha) - kinv_trace)
        return -lml, -grad


def _search(obj: _Objective, starts: np.ndarray, bounds, max_iter: int):
    """Run one local minimization per start; return (best_fun, best_x) or None."""
    best = None
    for x0 in starts:
        res = minimize(
            obj, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": max_iter, "ftol": 1e-8, "gtol": 1e-5},
        )
        if np.isfinite(res.fun) and res.fun < _CHOL_FAILED and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x.copy())
    return best


def fit(data: Dataset, config: Optional[FitConfig] = None) -> KrigingModel:
    """Fit hyper-parameters by multi-start maximum likelihood.

    Deterministic for a given ``config.seed``: restart points are drawn
    once from a seeded uniform distribution, local searches run in a
    fixed order, and the numerical core is pinned to one BLAS thread so
    the result does not depend on the threading environment either.
    Parallelize across independent fits instead (see ``ck_fit``).
    """
    if config is None:
        config = FitConfig()
    if data.n < 2:
        raise ParameterError(f"fit requires at least 2 points, got {data.n}")

    if isinstance(config.nugget, str) and config.nugget == "auto":
        levels: list[Optional[float]] = list(_NUGGET_LADDER)
    elif isinstance(config.nugget, str):  # "optimize"
        levels = [None]
    else:
        levels = [float(config.nugget)]

    var_y = float(np.var(data.y))
    log_vy = np.log(max(var_y, 1e-12))
    if config.log_sigma2_bounds is not None:
        s2_bounds = config.log_sigma2_bounds
    else:
        s2_bounds = (log_vy - 10.0, log_vy + 10.0)

    optimize_nugget = levels == [None]
    probe = _Objective(data, config.isotropic, fixed_nugget=None if optimize_nugget else 0.0)
    bounds = [config.log_theta_bounds] * probe.n_theta + [s2_bounds]
    if optimize_nugget:
        bounds.append((np.log(1e-12), log_vy + 2.0))

    rng = np.random.default_rng(config.seed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    # Restart points are drawn uniformly from the central half of the search
    # box; the extreme corners are almost always infeasible or flat.
    pad = 0.25 * (hi - lo)
    starts = rng.uniform(lo + pad, hi - pad, size=(config.restarts, len(bounds)))

    last_theta = None
    for level in levels:
        obj = _Objective(data, config.isotropic, fixed_nugget=level)
        with threadpool_limits(limits=1):
            best = _search(obj, starts, bounds, config.max_iter)
        if best is None:
            continue
        params = obj.unpack(best[1])
        last_theta = params.theta
        try:
            return build_model(data, params, fit_config=config)
        except ConditioningError:
            continue  # escalate the nugget (auto mode) or fall through
    raise ConditioningError(
        f"could not fit a positive-definite covariance for n={data.n} points"
        + ("" if last_theta is None
           else f" (last theta tried: {np.array2string(last_theta, precision=4)})")
    )
