"""Exterior algebra on R^n in the lexicographic multi-index basis.

A k-vector is stored as its C(n, k) coordinates. Two scalar modes exist:
binary floats (``float64`` arrays) and exact rationals (object arrays of
``Fraction``). Mixing the two in one operation raises ``ValueError``.

Multi-indices are 0-based tuples internally; the JSON form only stores the
coefficient vector, so the convention never leaks to files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import numpy as np

from . import _exact

DEFAULT_RANK_TOL = 1e-8


# ---------------------------------------------------------------------------
# basis bookkeeping


@lru_cache(maxsize=None)
def basis(n: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All strictly increasing k-tuples of ``range(n)``, lexicographically."""
    if not 0 <= k <= n:
        raise ValueError(f"grade {k} out of range for dimension {n}")
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=None)
def _rank_table(n: int, k: int) -> dict[tuple[int, ...], int]:
    return {idx: r for r, idx in enumerate(basis(n, k))}


def multi_index_rank(indices, n: int) -> int:
    idx = tuple(int(i) for i in indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ValueError(f"multi-index {idx} is not strictly increasing")
    if idx and not (0 <= idx[0] and idx[-1] < n):
        raise ValueError(f"multi-index {idx} out of range for n={n}")
    return _rank_table(n, len(idx))[idx]


def multi_index_unrank(r: int, n: int, k: int) -> tuple[int, ...]:
    return basis(n, k)[r]


def _inversions(a, b) -> int:
    return sum(1 for i in a for j in b if i > j)


@lru_cache(maxsize=None)
def _wedge_table(n: int, j: int, l: int):
    rows = _rank_table(n, j + l)
    ia, ib, ic, sg = [], [], [], []
    for ra, a in enumerate(basis(n, j)):
        sa = set(a)
        for rb, b in enumerate(basis(n, l)):
            if sa.intersection(b):
                continue
            ia.append(ra)
            ib.append(rb)
            ic.append(rows[tuple(sorted(a + b))])
            sg.append(-1 if _inversions(a, b) % 2 else 1)
    return (np.array(ia, dtype=int), np.array(ib, dtype=int),
            np.array(ic, dtype=int), np.array(sg, dtype=int))


@lru_cache(maxsize=None)
def _hodge_table(n: int, j: int):
    """For grade-j input: target ranks and signs of *(e_J) = sign(J, J^c) e_{J^c}."""
    target = _rank_table(n, n - j)
    tgt, sgn = [], []
    for J in basis(n, j):
        comp = tuple(i for i in range(n) if i not in J)
        tgt.append(target[comp])
        sgn.append(-1 if _inversions(J, comp) % 2 else 1)
    return np.array(tgt, dtype=int), np.array(sgn, dtype=int)


# ---------------------------------------------------------------------------
# KVector


@dataclass(frozen=True, eq=False)
class KVector:
    n: int
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.dtype != object:
            c = np.asarray(c, dtype=float)
        if not 0 <= self.k <= self.n:
            raise ValueError(f"grade {self.k} out of range for n={self.n}")
        if c.shape != (math.comb(self.n, self.k),):
            raise ValueError(
                f"expected {math.comb(self.n, self.k)} coefficients for "
                f"(n={self.n}, k={self.k}), got shape {c.shape}")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction helpers
    @classmethod
    def zero(cls, n: int, k: int, exact: bool = False) -> "KVector":
        m = math.comb(n, k)
        return cls(n, k, _exact.zeros(m) if exact else np.zeros(m))

    @classmethod
    def basis_vector(cls, n: int, indices, exact: bool = False) -> "KVector":
        """e_{i1} ^ ... ^ e_{ik} for 0-based increasing ``indices``."""
        idx = tuple(indices)
        v = cls.zero(n, len(idx), exact)
        c = v.coeffs.copy()
        c[multi_index_rank(idx, n)] = Fraction(1) if exact else 1.0
        return cls(n, len(idx), c)

    @classmethod
    def from_vector(cls, v, exact: bool | None = None) -> "KVector":
        arr = np.asarray(v)
        if exact or (exact is None and arr.dtype == object):
            return cls(arr.shape[0], 1, _exact.fraction_array(arr))
        return cls(arr.shape[0], 1, np.asarray(arr, dtype=float))

    @property
    def mode(self) -> str:
        return "rational" if self.coeffs.dtype == object else "float"

    @property
    def exact(self) -> bool:
        return self.coeffs.dtype == object

    def as_float(self) -> "KVector":
        if not self.exact:
            return self
        return KVector(self.n, self.k, np.array([float(x) for x in self.coeffs]))

    def as_exact(self) -> "KVector":
        if self.exact:
            return self
        return KVector(self.n, self.k, _exact.fraction_array(self.coeffs))

    def _check(self, other: "KVector", same_grade: bool = True):
        if not isinstance(other, KVector):
            raise TypeError(f"expected KVector, got {type(other).__name__}")
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")
        if same_grade and self.k != other.k:
            raise ValueError(f"grade mismatch: {self.k} vs {other.k}")
        if self.exact != other.exact:
            raise ValueError("mixed scalar modes (rational vs float)")

    def __add__(self, other):
        self._check(other)
        return KVector(self.n, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return KVector(self.n, self.k, self.coeffs - other.coeffs)

    def __neg__(self):
        return KVector(self.n, self.k, -self.coeffs)

    def __mul__(self, t):
        if isinstance(t, KVector):
            return NotImplemented
        if self.exact:
            t = _exact.to_fraction(t)
        elif isinstance(t, Fraction):
            t = float(t)
        return KVector(self.n, self.k, self.coeffs * t)

    __rmul__ = __mul__

    def __truediv__(self, t):
        if self.exact:
            return self * (1 / _exact.to_fraction(t))
        return self * (1.0 / float(t))

    def __xor__(self, other):
        return wedge(self, other)

    def norm_sq(self):
        return inner(self, self)

    def norm(self) -> float:
        return math.sqrt(float(self.norm_sq()))

    def is_zero(self) -> bool:
        return all(x == 0 for x in self.coeffs)

    def allclose(self, other: "KVector", tol: float = 1e-10) -> bool:
        a, b = self.as_float(), other.as_float()
        return (a.n, a.k) == (b.n, b.k) and bool(
            np.max(np.abs(a.coeffs - b.coeffs), initial=0.0) <= tol)

    def equals(self, other: "KVector") -> bool:
        """Exact coordinate equality (meaningful in rational mode)."""
        return (self.n, self.k) == (other.n, other.k) and all(
            x == y for x, y in zip(self.coeffs, other.coeffs))

    def to_json(self) -> dict:
        if self.exact:
            coeffs = [format_scalar(x) for x in self.coeffs]
        else:
            coeffs = [float(x) for x in self.coeffs]
        return {"n": self.n, "k": self.k, "coeffs": coeffs}

    @classmethod
    def from_json(cls, obj: dict) -> "KVector":
        coeffs = obj["coeffs"]
        exact = any(isinstance(c, str) for c in coeffs)
        arr = _exact.fraction_array(coeffs) if exact else np.asarray(coeffs, dtype=float)
        return cls(int(obj["n"]), int(obj["k"]), arr)

    def __repr__(self):
        terms = []
        for c, idx in zip(self.coeffs, basis(self.n, self.k)):
            if c != 0:
                name = "^".join(f"e{i + 1}" for i in idx) or "1"
                terms.append(f"{c}*{name}")
        return f"KVector(n={self.n}, k={self.k}: {' + '.join(terms) or '0'})"


def format_scalar(x):
    """Rationals as "p/q" strings, everything else as float."""
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return float(x)


def parse_scalar(x):
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


# ---------------------------------------------------------------------------
# core operations


def wedge(a: KVector, b: KVector) -> KVector:
    a._check(b, same_grade=False)
    if a.k + b.k > a.n:
        raise ValueError(f"grade overflow: {a.k} + {b.k} > {a.n}")
    n, kk = a.n, a.k + b.k
    ia, ib, ic, sg = _wedge_table(n, a.k, b.k)
    m = math.comb(n, kk)
    if a.exact:
        out = _exact.zeros(m)
        for x, y, z, s in zip(ia, ib, ic, sg):
            if a.coeffs[x] != 0 and b.coeffs[y] != 0:
                out[z] += s * a.coeffs[x] * b.coeffs[y]
        return KVector(n, kk, out)
    vals = sg * a.coeffs[ia] * b.coeffs[ib]
    return KVector(n, kk, np.bincount(ic, weights=vals, minlength=m) if len(ic) else np.zeros(m))


def hodge_star(z: KVector) -> KVector:
    """Duality with respect to e1^...^en: inner(xi, *z) = [z ^ xi]_top."""
    tgt, sgn = _hodge_table(z.n, z.k)
    m = math.comb(z.n, z.n - z.k)
    out = _exact.zeros(m) if z.exact else np.zeros(m)
    for src in range(len(tgt)):
        out[tgt[src]] = sgn[src] * z.coeffs[src]
    return KVector(z.n, z.n - z.k, out)


def inner(a: KVector, b: KVector):
    a._check(b)
    if a.exact:
        return _exact.dot(a.coeffs, b.coeffs)
    return float(np.dot(a.coeffs, b.coeffs))


def _wedge_map_matrix(xi: KVector) -> np.ndarray:
    """Matrix of v -> v ^ xi, shape C(n, k+1) x n."""
    n = xi.n
    if xi.k == n:
        return (_exact.zeros((0, n)) if xi.exact else np.zeros((0, n)))
    cols = []
    for i in range(n):
        cols.append(wedge(KVector.basis_vector(n, (i,), xi.exact), xi).coeffs)
    return np.stack(cols, axis=1)


def associated_space(xi: KVector, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Basis (as columns) of {v : v ^ xi = 0}.

    Float mode returns an orthonormal basis from the SVD, counting singular
    values <= tol * s_max as zero. Rational mode returns an exact basis that
    is orthogonal but not normalised.
    """
    if xi.is_zero():
        raise ValueError("associated space of the zero k-vector is all of R^n")
    a = _wedge_map_matrix(xi)
    n = xi.n
    if xi.exact:
        ns = _exact.nullspace(a)
        return _exact.gram_schmidt_orthogonal(ns) if ns.shape[1] else ns
    if a.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    sv = np.zeros(n)
    sv[: s.size] = s
    null = sv <= tol * smax
    return vt[null].T


def is_simple(xi: KVector, tol: float = DEFAULT_RANK_TOL) -> bool:
    return associated_space(xi, tol).shape[1] == xi.k


def wedge_cols(w) -> KVector:
    """w_1 ^ ... ^ w_k for the columns of an n x k matrix (k x k minors)."""
    w = np.asarray(w)
    exact = w.dtype == object
    if w.ndim != 2:
        raise ValueError("expected an n x k matrix")
    n, k = w.shape
    idx = basis(n, k)
    if exact:
        w = _exact.fraction_array(w)
        if k == 0:
            return KVector(n, 0, _exact.fraction_array([1]))
        return KVector(n, k, np.array([_exact.det(w[list(i), :]) for i in idx], dtype=object))
    w = np.asarray(w, dtype=float)
    if k == 0:
        return KVector(n, 0, np.ones(1))
    sub = w[np.array(idx)]  # (M, k, k)
    if k == 1:
        return KVector(n, k, sub[:, 0, 0])
    if k == 2:
        return KVector(n, k, sub[:, 0, 0] * sub[:, 1, 1] - sub[:, 0, 1] * sub[:, 1, 0])
    return KVector(n, k, np.linalg.det(sub))


def stacked_identity(x) -> np.ndarray:
    """M(X) = (I_k ; X) for an (n-k) x k matrix X."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("X must be a 2-d (n-k) x k matrix")
    k = x.shape[1]
    if x.dtype == object:
        return np.concatenate([_exact.identity(k), _exact.fraction_array(x)], axis=0)
    return np.vstack([np.eye(k), np.asarray(x, dtype=float)])


def wedge_M(x) -> KVector:
    return wedge_cols(stacked_identity(x))


def xi_from_hom(f) -> tuple[KVector, bool]:
    """Hodge dual of the wedge of the rows of an (n-k) x n matrix.

    Returns the k-vector and a flag that is True when F is rank deficient
    (in which case the k-vector is zero).
    """
    f = np.asarray(f)
    xi = hodge_star(wedge_cols(f.T))
    if xi.exact:
        return xi, xi.is_zero()
    # Hadamard: |row wedge| <= product of row norms; relative rank test
    scale = float(np.prod(np.linalg.norm(np.asarray(f, dtype=float), axis=1)))
    return xi, bool(xi.norm() <= 1e-12 * scale) or scale == 0.0


def factor_simple(xi: KVector, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """An n x k frame with orthogonal columns whose wedge is ``xi``.

    Scale and orientation are absorbed into the first column.
    """
    if xi.k == 0:
        raise ValueError("grade-0 vectors have no frame")
    b = associated_space(xi, tol)
    if b.shape[1] != xi.k:
        raise ValueError(f"k-vector is not simple (associated space has dim {b.shape[1]}, need {xi.k})")
    w = wedge_cols(b)
    if xi.exact:
        pivot = next(i for i, c in enumerate(w.coeffs) if c != 0)
        t = xi.coeffs[pivot] / w.coeffs[pivot]
    else:
        t = inner(xi, w) / inner(w, w)
    frame = b.copy()
    frame[:, 0] = frame[:, 0] * t
    if xi.exact:
        if not wedge_cols(frame).equals(xi):
            raise ValueError("k-vector is not simple (exact factor check failed)")
    else:
        err = np.linalg.norm(wedge_cols(frame).coeffs - xi.coeffs)
        if err > max(tol, 1e-10) * xi.norm():
            raise ValueError(f"k-vector is not simple within tolerance (re-wedge error {err:.3g})")
    return frame


# ---------------------------------------------------------------------------
# oriented planes


@dataclass(frozen=True, eq=False)
class OrientedPlane:
    """A unit simple k-vector together with a frame wedging to it."""

    kvector: KVector
    frame: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frame)
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "frame", f)

    @property
    def n(self) -> int:
        return self.kvector.n

    @property
    def k(self) -> int:
        return self.kvector.k

    @classmethod
    def from_frame(cls, w) -> "OrientedPlane":
        w = np.asarray(w)
        if w.dtype == object:
            kv = wedge_cols(w)
            if kv.norm_sq() != 1:
                raise ValueError("rational frame does not wedge to a unit k-vector")
            return cls(kv, w)
        q, r = np.linalg.qr(np.asarray(w, dtype=float))
        d = np.diag(r)
        if np.any(np.abs(d) <= 1e-12 * max(1.0, np.abs(d).max(initial=0.0))):
            raise ValueError("degenerate frame (columns not independent)")
        q = q * np.sign(d)
        return cls(wedge_cols(q), q)

    @classmethod
    def from_kvector(cls, xi: KVector, tol: float = DEFAULT_RANK_TOL) -> "OrientedPlane":
        xi = xi.as_float()
        nrm = xi.norm()
        if nrm == 0:
            raise ValueError("zero k-vector has no plane")
        frame = factor_simple(xi / nrm, tol)
        plane = cls.from_frame(frame)
        # keep the caller's coordinates (only renormalised) as the k-vector
        return cls(xi / nrm, plane.frame)

    def validate(self, tol: float = 1e-10) -> None:
        if self.kvector.exact:
            if not wedge_cols(self.frame).equals(self.kvector):
                raise ValueError("frame does not wedge to the k-vector")
            if self.kvector.norm_sq() != 1:
                raise ValueError("k-vector is not unit")
            return
        if abs(self.kvector.norm() - 1.0) > tol:
            raise ValueError(f"|xi| = {self.kvector.norm()!r} is not 1")
        if not wedge_cols(self.frame).allclose(self.kvector, tol):
            raise ValueError("frame does not wedge to the k-vector")

    def __neg__(self):
        f = np.array(self.frame, copy=True)
        f[:, 0] = -f[:, 0]
        return OrientedPlane(-self.kvector, f)

    def to_json(self) -> dict:
        return self.kvector.to_json()

    @classmethod
    def from_json(cls, obj: dict) -> "OrientedPlane":
        return cls.from_kvector(KVector.from_json(obj))


def standard_plane(n: int, k: int) -> OrientedPlane:
    """e_1 ^ ... ^ e_k."""
    return OrientedPlane(KVector.basis_vector(n, tuple(range(k))), np.eye(n)[:, :k])


def random_plane(n: int, k: int, rng: np.random.Generator) -> OrientedPlane:
    """Rotation-invariant sample: Gaussian frame, QR, wedge."""
    return OrientedPlane.from_frame(rng.standard_normal((n, k)))
