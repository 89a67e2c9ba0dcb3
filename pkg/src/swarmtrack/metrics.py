"""OSPA distance and across-trial summary statistics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

EXHAUSTIVE_MAX = 6


@dataclass(frozen=True)
class OspaParams:
    c: float = 40.0
    p: float = 2.0

    def __post_init__(self):
        if self.c <= 0 or self.p < 1:
            raise ValueError("OSPA needs c > 0 and p >= 1")


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    return arr.reshape(-1, 2) if arr.size else np.zeros((0, 2))


def _min_assignment_cost(cost: np.ndarray) -> float:
    m, n = cost.shape
    if n <= EXHAUSTIVE_MAX:
        rows = np.arange(m)
        return min(float(cost[rows, list(perm)].sum()) for perm in itertools.permutations(range(n), m))
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].sum())


def ospa(estimates, truths, params: OspaParams = OspaParams()) -> float:
    """Order-p OSPA distance with cutoff c between two finite point sets."""
    X, Y = _as_points(estimates), _as_points(truths)
    if len(X) > len(Y):
        X, Y = Y, X
    m, n = len(X), len(Y)
    if n == 0:
        return 0.0
    c, p = params.c, params.p
    if m == 0:
        return float(c)
    dist = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    cost = np.minimum(dist, c) ** p
    total = _min_assignment_cost(cost) + c**p * (n - m)
    return float((total / n) ** (1.0 / p))


@dataclass(frozen=True)
class Summary:
    mean: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray


def summarize(trial_curves) -> Summary:
    """Per-epoch mean and normal-approximation 95% interval across trials (rows)."""
    curves = np.asarray(trial_curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 2:
        raise ValueError("summarize needs at least 2 trials")
    mean = curves.mean(axis=0)
    stderr = curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0])
    return Summary(mean=mean, ci_low=mean - 1.96 * stderr, ci_high=mean + 1.96 * stderr)
