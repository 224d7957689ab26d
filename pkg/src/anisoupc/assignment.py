"""Minimum-cost perfect assignment (Hungarian method with potentials, O(n^3))."""
from __future__ import annotations

import math

import numpy as np


def min_cost_assignment(cost) -> tuple[np.ndarray, float]:
    """Return (perm, value) with perm[i] the column assigned to row i.

    Shortest augmenting paths with dual potentials. Ties are broken toward the
    lowest column index, so the result is deterministic.
    """
    a = np.asarray(cost, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("cost matrix must be square")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int), 0.0
    inf = float("inf")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=int)  # match[j] = row (1-based) matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta, j1 = inf, -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = a[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = np.zeros(n, dtype=int)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    value = math.fsum(float(a[i, perm[i]]) for i in range(n))  # order independent
    return perm, value
