"""Small exact linear-algebra kernels over ``fractions.Fraction``.

Everything here works on numpy object arrays holding Fractions (ints are
promoted). Dimensions are desk scale, so plain Gaussian elimination is fine.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    # floats are binary rationals, so this conversion is exact
    return Fraction(float(x))


def fraction_array(a) -> np.ndarray:
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = to_fraction(arr[idx])
    return out


def is_exact(a: np.ndarray) -> bool:
    return np.asarray(a).dtype == object


def det(a: np.ndarray) -> Fraction:
    m = fraction_array(a).copy()
    n = m.shape[0]
    if n == 0:
        return Fraction(1)
    sign = 1
    result = Fraction(1)
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r, col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            sign = -sign
        p = m[col, col]
        result *= p
        for r in range(col + 1, n):
            if m[r, col] != 0:
                f = m[r, col] / p
                m[r, col:] = m[r, col:] - f * m[col, col:]
    return sign * result


def rref(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form and pivot columns."""
    m = fraction_array(a).copy()
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        piv = next((i for i in range(r, rows) if m[i, c] != 0), None)
        if piv is None:
            continue
        if piv != r:
            m[[r, piv]] = m[[piv, r]]
        m[r] = m[r] / m[r, c]
        for i in range(rows):
            if i != r and m[i, c] != 0:
                m[i] = m[i] - m[i, c] * m[r]
        pivots.append(c)
        r += 1
    return m, pivots


def nullspace(a: np.ndarray) -> np.ndarray:
    """Exact basis of the right null space, returned as columns (cols x dim)."""
    a = fraction_array(a)
    cols = a.shape[1]
    if a.shape[0] == 0:
        return identity(cols)
    red, pivots = rref(a)
    free = [c for c in range(cols) if c not in pivots]
    basis = np.empty((cols, len(free)), dtype=object)
    basis[:] = Fraction(0)
    for j, fc in enumerate(free):
        basis[fc, j] = Fraction(1)
        for i, pc in enumerate(pivots):
            basis[pc, j] = -red[i, fc]
    return basis


def rank(a: np.ndarray) -> int:
    a = fraction_array(a)
    if a.size == 0:
        return 0
    return len(rref(a)[1])


def solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve a square nonsingular system exactly; b may be a vector or matrix."""
    a = fraction_array(a)
    b = fraction_array(b)
    vec = b.ndim == 1
    if vec:
        b = b.reshape(-1, 1)
    n = a.shape[0]
    red, pivots = rref(np.concatenate([a, b], axis=1))
    if pivots[:n] != list(range(n)):
        raise np.linalg.LinAlgError("singular system")
    x = red[:n, n:]
    return x[:, 0] if vec else x


def identity(n: int) -> np.ndarray:
    out = np.empty((n, n), dtype=object)
    out[:] = Fraction(0)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def zeros(shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out[...] = Fraction(0)
    return out


def dot(a: np.ndarray, b: np.ndarray):
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def gram_schmidt_orthogonal(w: np.ndarray) -> np.ndarray:
    """Orthogonalise columns without normalising, so entries stay rational.

    The transformation is unit upper triangular, hence the wedge of the
    columns is unchanged.
    """
    w = fraction_array(w).copy()
    for j in range(w.shape[1]):
        for i in range(j):
            nn = dot(w[:, i], w[:, i])
            if nn != 0:
                w[:, j] = w[:, j] - (dot(w[:, j], w[:, i]) / nn) * w[:, i]
    return w
