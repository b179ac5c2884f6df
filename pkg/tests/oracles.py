"""Slow reference implementations the fast code is checked against."""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_segmentation(V: np.ndarray, kappa: float, k_max: int):
    """Enumerate every admissible segmentation of y[0:n] into 1..k_max pieces.

    Costs are accumulated left to right exactly as the dynamic program does.
    Among equal costs the segmentation with the smaller K wins, then the one
    whose last boundary is smallest, then recursively to the left (the order
    in which the recursion breaks ties).

    Returns (k_hat, breaks, best cost per K).
    """
    n = V.shape[0] - 1
    best_per_k = np.full(k_max, np.inf)
    best = None
    for k in range(1, k_max + 1):
        for breaks in itertools.combinations(range(1, n), k - 1):
            bounds = (0, *breaks, n)
            if any(not V[a, b] > -np.inf for a, b in zip(bounds[:-1], bounds[1:])):
                continue
            cost = -2.0 * V[bounds[0], bounds[1]] + kappa
            for a, b in zip(bounds[1:-1], bounds[2:]):
                cost = cost - 2.0 * V[a, b] + kappa
            key = (cost, k, tuple(reversed(breaks)))
            if cost < best_per_k[k - 1]:
                best_per_k[k - 1] = cost
            if best is None or key < best[0]:
                best = (key, breaks)
    if best is None:
        return None, None, best_per_k
    return best[0][1], np.array(best[1], dtype=np.int64), best_per_k


def random_ml_matrix(rng: np.random.Generator, n: int, u_min: int, integer: bool = False) -> np.ndarray:
    """Synthetic upper-triangular matrix of segment log-likelihoods.

    Values are negative and roughly proportional to segment length; with
    ``integer`` they are small integers so exact ties are common.
    """
    V = np.full((n + 1, n + 1), -np.inf)
    for a in range(n):
        for b in range(a + u_min, n + 1):
            m = b - a
            if integer:
                V[a, b] = -float(rng.integers(0, 3 * m + 1))
            else:
                V[a, b] = -m * rng.uniform(0.5, 2.0) - rng.uniform(0.0, 3.0)
    return V


def grid_search_inarch1(y: np.ndarray, alpha0_grid: np.ndarray, alpha_grid: np.ndarray):
    """Exhaustive maximization of the INARCH(1) quasi-likelihood on a grid.

    The series is collapsed to distinct (previous, current) pairs so the
    grid evaluation is a small dense product. The pre-sample value is zero.
    """
    y = np.asarray(y, dtype=np.int64)
    prev = np.concatenate(([0], y[:-1]))
    pairs, counts = np.unique(np.stack([prev, y], axis=1), axis=0, return_counts=True)
    p = pairs[:, 0].astype(float)
    c = pairs[:, 1].astype(float)
    best = (-np.inf, None)
    for a0 in alpha0_grid:
        lam = a0 + np.outer(alpha_grid, p)  # (n_alpha, n_pairs)
        ll = (counts * (c * np.log(lam) - lam)).sum(axis=1)
        j = int(np.argmax(ll))
        if ll[j] > best[0]:
            best = (float(ll[j]), np.array([a0, alpha_grid[j]]))
    return best
