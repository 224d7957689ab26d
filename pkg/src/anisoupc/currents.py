"""Simplicial polyhedral chains: boundary, mass, Gaussian image and energy."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

import numpy as np
from scipy.spatial import cKDTree

from . import _exact
from .exterior import KVector, OrientedPlane, format_scalar, parse_scalar, wedge_cols
from .integrands import GeometricIntegrand
from .polyconvexity import Decomposition

WELD_TOL = 1e-9
MERGE_TOL = 1e-9
MIN_VOLUME = 1e-12


class ChainError(ValueError):
    pass


def _perm_parity(seq) -> int:
    """+1 for even, -1 for odd permutation of distinct sortable items."""
    sign = 1
    s = list(seq)
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[j] < s[i]:
                sign = -sign
    return sign


@dataclass(frozen=True, eq=False)
class Cell:
    """Oriented k-simplex; orientation is the vertex order."""

    vertices: np.ndarray  # (k+1) x n, float or Fractions

    def __post_init__(self):
        v = np.asarray(self.vertices)
        if v.dtype != object:
            v = v.astype(float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ChainError("cell vertices must be a (k+1) x n array")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.k > 0 and not self._gram_det() > 0:
            raise ChainError("degenerate cell (affinely dependent vertices)")
        if self.k > 0 and not self.exact and self.volume() <= MIN_VOLUME:
            raise ChainError(f"degenerate cell (k-volume {self.volume():.3g})")

    @classmethod
    def _raw(cls, vertices) -> "Cell":
        """Skip validation; for faces and welded copies of already valid cells."""
        cell = cls.__new__(cls)
        object.__setattr__(cell, "vertices", vertices)
        return cell

    @property
    def k(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def n(self) -> int:
        return self.vertices.shape[1]

    @property
    def exact(self) -> bool:
        return self.vertices.dtype == object

    def edges(self) -> np.ndarray:
        """n x k matrix of edge vectors v_j - v_0."""
        return (self.vertices[1:] - self.vertices[0]).T

    def _gram_det(self):
        e = self.edges()
        if self.exact:
            return _exact.det(e.T @ e)
        return float(np.linalg.det(e.T @ e))

    def volume(self) -> float:
        if self.k == 0:
            return 1.0
        return math.sqrt(max(float(self._gram_det()), 0.0)) / math.factorial(self.k)

    def key(self) -> tuple:
        return tuple(tuple(row) for row in self.vertices)


def tangent(cell: Cell) -> OrientedPlane:
    """Unit k-vector of the cell's edge vectors, with its orthonormalised frame."""
    if cell.k == 0:
        raise ChainError("0-cells have no tangent plane")
    e = np.asarray(cell.edges(), dtype=float)
    xi = wedge_cols(e)
    nrm = xi.norm()
    if nrm <= MIN_VOLUME:
        raise ChainError("degenerate cell has no tangent plane")
    q, r = np.linalg.qr(e)
    q = q * np.sign(np.diag(r))
    return OrientedPlane(xi / nrm, q)


@dataclass(frozen=True, eq=False)
class PolyhedralChain:
    n: int
    k: int
    cells: tuple  # of (Cell, multiplicity)

    def __post_init__(self):
        kept = []
        for cell, mult in self.cells:
            if not isinstance(cell, Cell):
                cell = Cell(cell)
            if (cell.n, cell.k) != (self.n, self.k):
                raise ChainError(f"cell of shape (n={cell.n}, k={cell.k}) in a (n={self.n}, k={self.k}) chain")
            if mult != 0:
                kept.append((cell, mult))
        object.__setattr__(self, "cells", tuple(kept))

    def __len__(self):
        return len(self.cells)

    def __neg__(self):
        return PolyhedralChain(self.n, self.k, tuple((c, -m) for c, m in self.cells))

    def __add__(self, other: "PolyhedralChain"):
        if (self.n, self.k) != (other.n, other.k):
            raise ChainError("adding chains of different dimensions")
        return PolyhedralChain(self.n, self.k, self.cells + other.cells)

    def __sub__(self, other):
        return self + (-other)

    def is_empty(self) -> bool:
        return not self.cells

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k,
                "cells": [{"vertices": [[format_scalar(x) for x in row] for row in c.vertices],
                           "multiplicity": format_scalar(m)} for c, m in self.cells]}

    @classmethod
    def from_json(cls, obj: dict) -> "PolyhedralChain":
        try:
            n, k = int(obj["n"]), int(obj["k"])
            cells = []
            for entry in obj["cells"]:
                verts = [[parse_scalar(x) for x in row] for row in entry["vertices"]]
                exact = any(isinstance(x, Fraction) for row in verts for x in row)
                arr = _exact.fraction_array(verts) if exact else np.array(verts, dtype=float)
                cells.append((Cell(arr), parse_scalar(entry.get("multiplicity", 1))))
        except (KeyError, TypeError) as exc:
            raise ChainError(f"malformed chain JSON: {exc}") from None
        return cls(n, k, tuple(cells))


def load_chain(path) -> PolyhedralChain:
    with open(path, encoding="utf-8") as fh:
        return PolyhedralChain.from_json(json.load(fh))


def save_chain(chain: PolyhedralChain, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain.to_json(), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# canonical form and boundary


def _canonical_cells(cells, n: int, k: int):
    """Sort each cell's vertices ascending (tracking parity) and merge equal cells."""
    acc: dict = {}
    order = []
    for cell, mult in cells:
        key = cell.key()
        idx = sorted(range(len(key)), key=lambda i: key[i])
        sk = tuple(key[i] for i in idx)
        if len(set(sk)) < len(sk):
            continue  # collapsed by welding
        sign = _perm_parity(idx)
        if sk not in acc:
            acc[sk] = 0
            order.append(sk)
        acc[sk] = acc[sk] + sign * mult
    out = []
    for sk in sorted(order):
        m = acc[sk]
        if m != 0:
            out.append((sk, m))
    return out


def _rebuild(n, k, items, exact):
    cells = []
    for key, m in items:
        arr = _exact.fraction_array(key) if exact else np.array(key, dtype=float)
        cells.append((Cell._raw(arr), m))
    return PolyhedralChain(n, k, tuple(cells))


def canonical(chain: PolyhedralChain) -> PolyhedralChain:
    exact = any(c.exact for c, _ in chain.cells)
    return _rebuild(chain.n, chain.k, _canonical_cells(chain.cells, chain.n, chain.k), exact)


def boundary(chain: PolyhedralChain) -> PolyhedralChain:
    """Alternating face sum, canonicalised: sorted vertices, parity signs, merged."""
    if chain.k < 1:
        raise ChainError("boundary needs k >= 1")
    faces = []
    for cell, mult in chain.cells:
        v = cell.vertices
        for i in range(cell.k + 1):
            face = np.delete(v, i, axis=0)
            sign = -1 if i % 2 else 1
            faces.append((Cell._raw(face), sign * mult))
    exact = any(c.exact for c, _ in chain.cells)
    return _rebuild(chain.n, chain.k - 1, _canonical_cells(faces, chain.n, chain.k - 1), exact)


def _weld(points: np.ndarray, tol: float) -> np.ndarray:
    """Replace each point by the first point of its tol-connected cluster."""
    if len(points) == 0:
        return points
    tree = cKDTree(points)
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return points[[find(i) for i in range(len(points))]]


def chains_equal(a: PolyhedralChain, b: PolyhedralChain, tol: float = 1e-9,
                 weld_tol: float = WELD_TOL) -> bool:
    """Equality of canonical simplicial forms after welding vertices within weld_tol.

    This compares triangulations, not geometric supports: two different
    triangulations of the same polytope are reported unequal.
    """
    if (a.n, a.k) != (b.n, b.k):
        raise ChainError("comparing chains of different dimensions")
    diff = a - b
    if diff.is_empty():
        return True
    exact = all(c.exact for c, _ in diff.cells)
    if exact:
        return not _canonical_cells(diff.cells, diff.n, diff.k)
    pts = np.concatenate([np.asarray(c.vertices, dtype=float) for c, _ in diff.cells])
    welded = _weld(pts, weld_tol)
    cells, pos = [], 0
    for c, m in diff.cells:
        cells.append((Cell._raw(welded[pos:pos + c.k + 1]), float(m)))
        pos += c.k + 1
    return all(abs(m) <= tol for _, m in _canonical_cells(cells, diff.n, diff.k))


# ---------------------------------------------------------------------------
# mass, Gaussian image, energy


def mass(chain: PolyhedralChain) -> float:
    return float(sum(abs(float(m)) * c.volume() for c, m in chain.cells))


@dataclass(frozen=True, eq=False)
class DiscreteGrassMeasure:
    """Finite signed combination of Dirac masses on unit simple k-vectors, merged."""

    n: int
    k: int
    atoms: tuple  # of (KVector unit float, weight)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(_merge_atoms(self.atoms)))

    @property
    def total(self) -> float:
        return float(sum(w for _, w in self.atoms))

    def __sub__(self, other: "DiscreteGrassMeasure"):
        if (self.n, self.k) != (other.n, other.k):
            raise ChainError("measures live on different Grassmannians")
        return DiscreteGrassMeasure(self.n, self.k,
                                    self.atoms + tuple((p, -w) for p, w in other.atoms))

    def pair(self, psi: GeometricIntegrand) -> float:
        """Integral of psi against the measure."""
        return float(sum(w * psi(p) for p, w in self.atoms))

    def to_json(self) -> dict:
        return {"n": self.n, "k": self.k,
                "atoms": [{"plane": p.to_json(), "weight": float(w)} for p, w in self.atoms]}

    @classmethod
    def from_decomposition(cls, dec: Decomposition) -> "DiscreteGrassMeasure":
        """sum_i m_i delta_{eta_i}."""
        return cls(dec.n, dec.k, tuple((p.kvector.as_float(), float(m))
                                       for m, p in zip(dec.weights, dec.planes)))


def _merge_atoms(atoms):
    planes, weights = [], []
    for p, w in atoms:
        p = p.as_float() if isinstance(p, KVector) else p.kvector.as_float()
        for i, q in enumerate(planes):
            if float(np.linalg.norm(q.coeffs - p.coeffs)) < MERGE_TOL:
                weights[i] += float(w)
                break
        else:
            planes.append(p)
            weights.append(float(w))
    return [(p, w) for p, w in zip(planes, weights) if w != 0.0]


def gaussian_image(chain: PolyhedralChain) -> DiscreteGrassMeasure:
    return DiscreteGrassMeasure(
        chain.n, chain.k,
        tuple((tangent(c).kvector, float(m) * c.volume()) for c, m in chain.cells))


def tv_distance(mu: DiscreteGrassMeasure, nu: DiscreteGrassMeasure) -> float:
    return float(sum(abs(w) for _, w in (mu - nu).atoms))


def _check_dims(psi: GeometricIntegrand, chain: PolyhedralChain):
    if (psi.n, psi.k) != (chain.n, chain.k):
        raise ChainError(f"integrand on (n={psi.n}, k={psi.k}) vs chain (n={chain.n}, k={chain.k})")


def energy(psi: GeometricIntegrand, chain: PolyhedralChain) -> float:
    """Cellwise sum of multiplicity * volume * Psi(tangent)."""
    _check_dims(psi, chain)
    return float(sum(float(m) * c.volume() * psi(tangent(c).kvector) for c, m in chain.cells))


def energy_via_gaussian_image(psi: GeometricIntegrand, chain: PolyhedralChain) -> float:
    _check_dims(psi, chain)
    return gaussian_image(chain).pair(psi)


# ---------------------------------------------------------------------------
# test pairs


def kuhn_simplices(k: int):
    """Positively oriented Kuhn simplices of [0,1]^k as lists of 0/1 vertex tuples.

    Each permutation pi gives the path 0, e_pi1, e_pi1 + e_pi2, ...; odd
    permutations are reoriented by swapping the first two vertices.
    """
    out = []
    for perm in permutations(range(k)):
        v = [0] * k
        verts = [tuple(v)]
        for j in perm:
            v[j] = 1
            verts.append(tuple(v))
        if _perm_parity(perm) < 0:
            verts[0], verts[1] = verts[1], verts[0]
        out.append(verts)
    return out


def unit_cube_current(eta0: OrientedPlane, origin=None) -> PolyhedralChain:
    """Kuhn-triangulated unit cube of the plane eta0; every tangent equals eta0."""
    frame = np.asarray(eta0.frame, dtype=float)
    n, k = frame.shape
    q, r = np.linalg.qr(frame)
    q = q * np.sign(np.diag(r))
    base = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
    cells = []
    for verts in kuhn_simplices(k):
        pts = np.array([base + q @ np.array(v, dtype=float) for v in verts])
        cells.append((Cell(pts), 1))
    return PolyhedralChain(n, k, tuple(cells))


def make_test_pair_k1(dec: Decomposition) -> tuple[PolyhedralChain, PolyhedralChain]:
    """Polyline S through the partial sums of m_i eta_i and the segment D = [0, eta0]."""
    if dec.k != 1:
        raise ChainError("polyhedral test pairs are only constructed for k = 1; "
                         "the general-k construction is out of scope")
    n = dec.n
    eta0 = np.asarray(dec.eta0.kvector.as_float().coeffs, dtype=float)
    pts = [np.zeros(n)]
    for m, p in zip(dec.weights, dec.planes):
        pts.append(pts[-1] + float(m) * np.asarray(p.kvector.as_float().coeffs, dtype=float))
    pts[-1] = eta0.copy()  # the decomposition identity, without roundoff
    s_cells = tuple((Cell(np.array([pts[i], pts[i + 1]])), 1) for i in range(len(pts) - 1))
    d_chain = PolyhedralChain(n, 1, ((Cell(np.array([np.zeros(n), eta0])), 1),))
    return PolyhedralChain(n, 1, s_cells), d_chain


def verify_aue(psi: GeometricIntegrand, c: float, s: PolyhedralChain, d: PolyhedralChain) -> float:
    """E(S) - E(D) - c (M(S) - M(D)) for a pair with equal boundaries."""
    if not chains_equal(boundary(s), boundary(d), 1e-9):
        raise ChainError("test pair boundaries differ")
    return energy(psi, s) - energy(psi, d) - c * (mass(s) - mass(d))
