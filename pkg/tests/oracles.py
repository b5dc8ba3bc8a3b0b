"""Independent reference implementations the tests check against.

Everything here is deliberately brute-force or closed-form and shares no
code with the package: central finite differences for gradients,
exhaustive search for clustering, pure-python rank correlation, and the
diagonal-Gaussian Frechet formula.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function, float64."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    xf = x.ravel()
    for i in range(xf.size):
        step = np.zeros_like(xf)
        step[i] = h
        flat[i] = (f((xf + step).reshape(x.shape)) - f((xf - step).reshape(x.shape))) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, reference: np.ndarray,
                       floor: float = 1e-8) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = np.maximum(np.abs(reference), floor)
    return float(np.max(np.abs(analytic - reference) / scale))


def exhaustive_kmedoids(distance_matrix: np.ndarray, k: int) -> tuple[float, tuple[int, ...]]:
    """Globally optimal k-medoids cost by trying every medoid subset.

    Ties go to the lexicographically smallest sorted medoid tuple.
    """
    cost, sets = exhaustive_kmedoids_ties(distance_matrix, k)
    return cost, min(sets)


def exhaustive_kmedoids_ties(distance_matrix: np.ndarray, k: int
                             ) -> tuple[float, set[tuple[int, ...]]]:
    """Optimal cost plus every medoid subset achieving it exactly.

    Cost ties are real even for generic distances: any two-member cluster
    is served equally well by either member.
    """
    d = np.asarray(distance_matrix, dtype=np.float64)
    n = d.shape[0]
    best_cost, best_sets = None, set()
    for subset in itertools.combinations(range(n), k):
        cost = float(d[:, list(subset)].min(axis=1).sum())
        if best_cost is None or cost < best_cost:
            best_cost, best_sets = cost, {subset}
        elif cost == best_cost:
            best_sets.add(subset)
    return best_cost, best_sets


def spearman_reference(xs, ys) -> float:
    """Rank-then-Pearson in pure python (average ranks for ties)."""

    def ranks(values):
        order = sorted(range(len(values)), key=lambda i: values[i])
        out = [0.0] * len(values)
        i = 0
        while i < len(order):
            j = i
            while j < len(order) and values[order[j]] == values[order[i]]:
                j += 1
            shared = (i + 1 + j) / 2.0
            for idx in order[i:j]:
                out[idx] = shared
            i = j
        return out

    rx = ranks(list(xs))
    ry = ranks(list(ys))
    n = len(rx)
    mx = sum(rx) / n
    my = sum(ry) / n
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    dx = math.sqrt(sum((a - mx) ** 2 for a in rx))
    dy = math.sqrt(sum((b - my) ** 2 for b in ry))
    return num / (dx * dy)


def frechet_diagonal(mean_a, var_a, mean_b, var_b) -> float:
    """Closed form for Gaussians with diagonal covariances.

    ||mu_a - mu_b||^2 + sum_i (sqrt(v_a_i) - sqrt(v_b_i))^2
    """
    mean_a = np.asarray(mean_a, dtype=np.float64)
    mean_b = np.asarray(mean_b, dtype=np.float64)
    var_a = np.asarray(var_a, dtype=np.float64)
    var_b = np.asarray(var_b, dtype=np.float64)
    diff = mean_a - mean_b
    return float(diff @ diff + np.sum((np.sqrt(var_a) - np.sqrt(var_b)) ** 2))
