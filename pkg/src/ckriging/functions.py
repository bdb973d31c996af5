"""Synthetic benchmark functions and dataset generation.

Each function comes with its conventional sampling box (see FUNCTIONS).
``schaffer``, ``h1`` and ``himmelblau`` are classically two-dimensional;
for d > 2 they are extended additively over consecutive coordinate pairs
(x1,x2), (x2,x3), ... - a convention of this harness, not part of the
original definitions.  Targets are noise-free function values.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParameterError
from .gp import Dataset

__all__ = ["FUNCTIONS", "function_domain", "synth_dataset"]


def ackley(X):
    d = X.shape[1]
    s1 = np.sum(X**2, axis=1) / d
    s2 = np.sum(np.cos(2.0 * np.pi * X), axis=1) / d
    return 20.0 - 20.0 * np.exp(-0.2 * np.sqrt(s1)) + np.e - np.exp(s2)


def rastrigin(X):
    return 10.0 * X.shape[1] + np.sum(X**2 - 10.0 * np.cos(2.0 * np.pi * X), axis=1)


def schwefel(X):
    return 418.9828872724339 * X.shape[1] - np.sum(X * np.sin(np.sqrt(np.abs(X))), axis=1)


def rosenbrock(X):
    a = X[:, :-1]
    b = X[:, 1:]
    return np.sum(100.0 * (b - a**2) ** 2 + (1.0 - a) ** 2, axis=1)


def diffpow(X):
    d = X.shape[1]
    if d == 1:
        powers = np.array([2.0])
    else:
        powers = 2.0 + 4.0 * np.arange(d) / (d - 1)
    return np.sum(np.abs(X) ** powers, axis=1)


def _pairwise(X, f2):
    """Sum a two-argument function over consecutive coordinate pairs."""
    total = np.zeros(X.shape[0])
    for i in range(X.shape[1] - 1):
        total += f2(X[:, i], X[:, i + 1])
    return total


def schaffer(X):
    def f2(x, y):
        s = x**2 + y**2
        return 0.5 + (np.sin(x**2 - y**2) ** 2 - 0.5) / (1.0 + 0.001 * s) ** 2

    return _pairwise(X, f2)


def himmelblau(X):
    def f2(x, y):
        return (x**2 + y - 11.0) ** 2 + (x + y**2 - 7.0) ** 2

    return _pairwise(X, f2)


def h1(X):
    def f2(x, y):
        num = np.sin(x - y / 8.0) ** 2 + np.sin(y + x / 8.0) ** 2
        den = np.sqrt((x - 8.6998) ** 2 + (y - 6.7665) ** 2 + 1.0)
        return num / den

    return _pairwise(X, f2)


# name -> (callable, (low, high), minimum dimension)
FUNCTIONS = {
    "ackley": (ackley, (-15.0, 30.0), 1),
    "schaffer": (schaffer, (-100.0, 100.0), 2),
    "schwefel": (schwefel, (-500.0, 500.0), 1),
    "rastrigin": (rastrigin, (-5.12, 5.12), 1),
    "h1": (h1, (-100.0, 100.0), 2),
    "rosenbrock": (rosenbrock, (-2.048, 2.048), 1),
    "himmelblau": (himmelblau, (-6.0, 6.0), 2),
    "diffpow": (diffpow, (-1.0, 1.0), 1),
}


def function_domain(name: str):
    if name not in FUNCTIONS:
        raise ParameterError(f"unknown function {name!r}; expected one of {sorted(FUNCTIONS)}")
    return FUNCTIONS[name][1]


def synth_dataset(name: str, n: int, d: int, seed: int = 0) -> Dataset:
    """Uniform samples over the function's box with noise-free targets."""
    if name not in FUNCTIONS:
        raise ParameterError(f"unknown function {name!r}; expected one of {sorted(FUNCTIONS)}")
    fn, (lo, hi), min_d = FUNCTIONS[name]
    if d < min_d:
        raise ParameterError(f"{name} needs d >= {min_d}, got d={d}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(n, d))
    return Dataset(X, fn(X))
