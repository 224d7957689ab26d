"""Dense two-phase primal simplex with Bland's rule.

Solves ``min c.x  s.t.  A x = b, x >= 0``. Works on float arrays (with a
pivot tolerance) or on object arrays of Fractions (``tol=0``, exact).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _exact


class LPError(RuntimeError):
    pass


class LPInfeasible(LPError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" or "unbounded"
    x: np.ndarray
    objective: object
    basis: list[int]
    ray: np.ndarray | None = None
    iterations: int = 0


def _pivot(t: np.ndarray, r: int, j: int) -> None:
    t[r] = t[r] / t[r, j]
    for i in range(t.shape[0]):
        if i != r and t[i, j] != 0:
            t[i] = t[i] - t[i, j] * t[r]


def _bland_loop(t, basis, cost, ncols, tol, max_iter, it0):
    """Run Bland pivots on tableau ``t`` (rows x (ncols+1)); last column is rhs.

    ``cost`` has length ncols. Returns (status, entering column, iterations).
    """
    it = it0
    rows = t.shape[0]
    while True:
        if it >= max_iter:
            raise LPError(f"simplex iteration limit ({max_iter}) reached")
        cb = np.array([cost[b] for b in basis], dtype=t.dtype)
        entering = None
        for j in range(ncols):
            if j in basis:
                continue
            rc = cost[j] - (cb @ t[:, j] if rows else 0)
            if rc < -tol:
                entering = j
                break
        if entering is None:
            return "optimal", None, it
        leave = None
        best = None
        for i in range(rows):
            a = t[i, entering]
            if a > tol:
                ratio = t[i, -1] / a
                if (best is None or ratio < best - tol
                        or (abs(ratio - best) <= tol and basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded", entering, it
        _pivot(t, leave, entering)
        basis[leave] = entering
        it += 1


def simplex_min(c, a_eq, b_eq, *, tol: float | None = None, max_iter: int = 20000) -> LPResult:
    exact = np.asarray(a_eq).dtype == object or np.asarray(b_eq).dtype == object \
        or np.asarray(c).dtype == object
    if exact:
        c = _exact.fraction_array(c)
        a = _exact.fraction_array(a_eq)
        b = _exact.fraction_array(b_eq)
        tol = 0 if tol is None else tol
        zero, one = Fraction(0), Fraction(1)
    else:
        c = np.asarray(c, dtype=float)
        a = np.asarray(a_eq, dtype=float)
        b = np.asarray(b_eq, dtype=float)
        tol = 1e-11 if tol is None else tol
        zero, one = 0.0, 1.0
    m, n = a.shape
    a = a.copy()
    b = b.copy()
    for i in range(m):
        if b[i] < 0:
            a[i] = -a[i]
            b[i] = -b[i]

    # phase 1: artificials n..n+m-1
    t = np.empty((m, n + m + 1), dtype=object if exact else float)
    t[:, :n] = a
    t[:, n:n + m] = _exact.identity(m) if exact else np.eye(m)
    t[:, -1] = b
    basis = list(range(n, n + m))
    cost1 = [zero] * n + [one] * m
    status, _, it = _bland_loop(t, basis, cost1, n + m, tol, max_iter, 0)
    infeas = sum((t[i, -1] for i in range(m) if basis[i] >= n), zero)
    limit = 0 if exact else 1e-9 * max(1.0, float(np.abs(b).max(initial=0.0)))
    if infeas > limit:
        raise LPInfeasible(f"phase-1 optimum {float(infeas):.3g} > 0")

    # drive artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] < n:
            keep.append(i)
            continue
        col = next((j for j in range(n) if j not in basis and abs(t[i, j]) > tol), None)
        if col is None:
            continue  # redundant constraint
        _pivot(t, i, col)
        basis[i] = col
        keep.append(i)
    t = np.concatenate([t[keep][:, :n], t[keep][:, -1:]], axis=1)
    basis = [basis[i] for i in keep]

    status, entering, it = _bland_loop(t, basis, list(c), n, tol, max_iter, it)
    x = np.empty(n, dtype=object) if exact else np.zeros(n)
    if exact:
        x[:] = zero
    for i, bv in enumerate(basis):
        x[bv] = t[i, -1]
    obj = sum((c[j] * x[j] for j in range(n)), zero)
    ray = None
    if status == "unbounded":
        ray = np.empty(n, dtype=object) if exact else np.zeros(n)
        if exact:
            ray[:] = zero
        ray[entering] = one
        for i, bv in enumerate(basis):
            ray[bv] = -t[i, entering]
    return LPResult(status, x, obj, basis, ray, it)
