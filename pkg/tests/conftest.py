"""Shared oracles for the test suite.

The dense-inverse helpers below implement the posterior equations literally
with explicit matrix inverses and element-wise kernel evaluation.  They are
deliberately independent of the library's Cholesky code paths so they can
serve as brute-force references.
"""

import numpy as np


def oracle_kernel(theta, s2e, a, b) -> float:
    """Element-wise Gaussian covariance, written out long-hand."""
    total = 0.0
    for t, ai, bi in zip(np.atleast_1d(theta), np.ravel(a), np.ravel(b)):
        total += t * (ai - bi) ** 2
    return s2e * float(np.exp(-total))


def oracle_kernel_matrix(theta, s2e, A, B):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = oracle_kernel(theta, s2e, A[i], B[j])
    return out


def oracle_gp(X, y, theta, s2e, s2g, Q=None):
    """Literal dense-inverse Ordinary Kriging: trend, posterior, likelihood.

    Returns a dict with mu, lml and, when queries are given, mean/var arrays.
    """
    X = np.atleast_2d(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    K = oracle_kernel_matrix(theta, s2e, X, X) + s2g * np.eye(n)
    Kinv = np.linalg.inv(K)
    ones = np.ones(n)
    mu = (ones @ Kinv @ y) / (ones @ Kinv @ ones)
    resid = y - mu
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    lml = -0.5 * resid @ Kinv @ resid - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)
    out = {"mu": mu, "lml": lml}
    if Q is not None:
        Q = np.atleast_2d(Q)
        C = oracle_kernel_matrix(theta, s2e, X, Q)  # n x m
        denom = ones @ Kinv @ ones
        mean = mu + C.T @ Kinv @ resid
        var = np.empty(Q.shape[0])
        for j in range(Q.shape[0]):
            c = C[:, j]
            var[j] = s2g + s2e - c @ Kinv @ c + (1.0 - c @ Kinv @ ones) ** 2 / denom
        out["mean"] = mean
        out["var"] = var
    return out
