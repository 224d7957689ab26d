"""Q-valued piecewise-affine maps on Kuhn-triangulated unit cubes and their graphs.

Domain coordinates come first in the graph space R^(k+m); sheet values follow.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, product

import numpy as np

from .assignment import min_cost_assignment
from .currents import (Cell, PolyhedralChain, boundary, chains_equal, energy,
                       kuhn_simplices)
from .integrands import QIntegrand, eval_classical

CONTINUITY_TOL = 1e-10
BOUNDARY_TOL = 1e-9
SNAP_TOL = 1e-9


class QValuedError(ValueError):
    pass


# ---------------------------------------------------------------------------
# A_Q(R^m)


@dataclass(frozen=True, eq=False)
class QPoint:
    """Unordered Q-tuple of points of R^m."""

    points: np.ndarray  # Q x m

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1:
            raise QValuedError("a Q-point needs a Q x m array with Q >= 1")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def Q(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.points.shape[1]

    def sorted_points(self) -> np.ndarray:
        return self.points[np.lexsort(self.points.T[::-1])]


def metric_G(t1: QPoint, t2: QPoint) -> float:
    """Optimal-matching distance: min over pairings of sqrt(sum |P_i - S_sigma(i)|^2)."""
    if t1.Q != t2.Q:
        raise QValuedError(f"Q mismatch: {t1.Q} vs {t2.Q}")
    if t1.m != t2.m:
        raise QValuedError(f"target dimension mismatch: {t1.m} vs {t2.m}")
    diff = t1.points[:, None, :] - t2.points[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    _, value = min_cost_assignment(cost)
    return math.sqrt(max(value, 0.0))


def multisets_equal(t1: QPoint, t2: QPoint) -> bool:
    return t1.Q == t2.Q and np.array_equal(t1.sorted_points(), t2.sorted_points())


# ---------------------------------------------------------------------------
# Kuhn grid


@lru_cache(maxsize=None)
def kuhn_grid(k: int, level: int) -> tuple:
    """Cells of the level-L Kuhn triangulation as tuples of integer grid points.

    Cell index = cube index (lexicographic) * k! + permutation index; vertex
    order gives the positive orientation of R^k.
    """
    if k < 1 or level < 1:
        raise QValuedError("need k >= 1 and level >= 1")
    local = kuhn_simplices(k)
    cells = []
    for cube in product(range(level), repeat=k):
        for verts in local:
            cells.append(tuple(tuple(c + v for c, v in zip(cube, vert)) for vert in verts))
    return tuple(cells)


@lru_cache(maxsize=None)
def _perm_index(k: int) -> dict:
    return {p: i for i, p in enumerate(permutations(range(k)))}


def locate(k: int, level: int, x) -> int:
    """Index of a Kuhn cell containing x (ties resolved by a stable sort)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise QValuedError(f"expected a point of R^{k}")
    if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
        raise QValuedError(f"point {x.tolist()} lies outside the unit cube")
    y = np.clip(x, 0.0, 1.0) * level
    cube = np.minimum(np.floor(y).astype(int), level - 1)
    local = y - cube
    perm = tuple(int(i) for i in np.argsort(-local, kind="stable"))
    cube_index = 0
    for c in cube:
        cube_index = cube_index * level + int(c)
    return cube_index * math.factorial(k) + _perm_index(k)[perm]


def cell_volume(k: int, level: int) -> float:
    return 1.0 / (math.factorial(k) * level ** k)


# ---------------------------------------------------------------------------
# piecewise-affine Q-valued maps


@dataclass(frozen=True, eq=False)
class PiecewiseAffineQ:
    """Per Kuhn cell, Q affine sheets x -> a_i + L_i x (absolute coordinates)."""

    k: int
    m: int
    Q: int
    level: int
    a: np.ndarray  # ncells x Q x m
    lin: np.ndarray  # ncells x Q x m x k

    def __post_init__(self):
        # fixed C layout: small matmuls round differently on other stride orders
        a = np.array(self.a, dtype=float, order="C")
        lin = np.array(self.lin, dtype=float, order="C")
        nc = len(kuhn_grid(self.k, self.level))
        if a.shape != (nc, self.Q, self.m) or lin.shape != (nc, self.Q, self.m, self.k):
            raise QValuedError(
                f"sheet arrays must have shapes {(nc, self.Q, self.m)} and {(nc, self.Q, self.m, self.k)}")
        a.setflags(write=False)
        lin.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lin", lin)

    @property
    def n_cells(self) -> int:
        return self.a.shape[0]

    @property
    def cells(self) -> tuple:
        return kuhn_grid(self.k, self.level)

    def cell_points(self, c: int) -> np.ndarray:
        return np.array(self.cells[c], dtype=float) / self.level

    def sheet_values(self, c: int, x) -> np.ndarray:
        """Q x m values of the cell's sheets at x (no containment check)."""
        return self.a[c] + self.lin[c] @ np.asarray(x, dtype=float)

    @classmethod
    def from_vertex_values(cls, k, m, Q, level, values) -> "PiecewiseAffineQ":
        """Interpolate labelled sheet values given at grid vertices.

        ``values`` has shape (level+1,)*k + (Q, m). Sheets carry global labels,
        so the result is continuous as a Q-valued map.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (level + 1,) * k + (Q, m):
            raise QValuedError(f"vertex values must have shape {(level + 1,) * k + (Q, m)}")
        cells = kuhn_grid(k, level)
        a = np.empty((len(cells), Q, m))
        lin = np.empty((len(cells), Q, m, k))
        for c, verts in enumerate(cells):
            p = np.array(verts, dtype=float) / level
            e_inv = np.linalg.inv((p[1:] - p[0]).T)
            for q in range(Q):
                f = np.array([values[v][q] for v in verts])
                lq = (f[1:] - f[0]).T @ e_inv
                lin[c, q] = lq
                a[c, q] = f[0] - lq @ p[0]
        return cls(k, m, Q, level, a, lin)

    def to_json(self) -> dict:
        return {"k": self.k, "m": self.m, "Q": self.Q, "level": self.level,
                "cells": [{"sheets": [{"a": self.a[c, q].tolist(), "L": self.lin[c, q].tolist()}
                                      for q in range(self.Q)]} for c in range(self.n_cells)]}

    @classmethod
    def from_json(cls, obj: dict) -> "PiecewiseAffineQ":
        try:
            k, m, Q, level = (int(obj[key]) for key in ("k", "m", "Q", "level"))
            a = [[s["a"] for s in cell["sheets"]] for cell in obj["cells"]]
            lin = [[s["L"] for s in cell["sheets"]] for cell in obj["cells"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise QValuedError(f"malformed Q-function JSON: {exc}") from None
        return cls(k, m, Q, level, np.array(a, dtype=float).reshape(-1, Q, m),
                   np.array(lin, dtype=float).reshape(-1, Q, m, k))


def load_q_function(path) -> PiecewiseAffineQ:
    with open(path, encoding="utf-8") as fh:
        return PiecewiseAffineQ.from_json(json.load(fh))


def eval_q(f: PiecewiseAffineQ, x) -> QPoint:
    return QPoint(f.sheet_values(locate(f.k, f.level, x), x))


def differential_q(f: PiecewiseAffineQ, cell: int) -> list[np.ndarray]:
    if not 0 <= cell < f.n_cells:
        raise QValuedError(f"cell index {cell} out of range")
    return [f.lin[cell, q].copy() for q in range(f.Q)]


def _face_probe_points(pts: np.ndarray) -> list[np.ndarray]:
    return [*pts, pts.mean(axis=0)]


def continuity_defect(f: PiecewiseAffineQ) -> tuple[float, np.ndarray | None]:
    """Largest metric_G between neighbouring cells on shared faces (vertices and barycentre)."""
    faces: dict = {}
    for c, verts in enumerate(f.cells):
        for i in range(len(verts)):
            key = tuple(sorted(verts[:i] + verts[i + 1:]))
            faces.setdefault(key, []).append(c)
    worst, where = 0.0, None
    for key, owners in faces.items():
        if len(owners) < 2:
            continue
        pts = np.array(key, dtype=float) / f.level
        c0 = owners[0]
        for c1 in owners[1:]:
            for x in _face_probe_points(pts):
                g = metric_G(QPoint(f.sheet_values(c0, x)), QPoint(f.sheet_values(c1, x)))
                if g > worst:
                    worst, where = g, x
    return worst, where


def check_continuity(f: PiecewiseAffineQ, tol: float = CONTINUITY_TOL) -> None:
    worst, where = continuity_defect(f)
    if worst > tol:
        raise QValuedError(f"continuity violated: G = {worst:.3g} at x = {where.tolist()}")


# ---------------------------------------------------------------------------
# graphs, area formula, energies


def graph_current(f: PiecewiseAffineQ, check: bool = True) -> PolyhedralChain:
    """Lifted cells (v, a_i + L_i v), multiplicity 1, positively oriented.

    Lifted values at a grid vertex are snapped to a shared representative so
    neighbouring cells produce bit-identical faces.
    """
    if check:
        check_continuity(f)
    reps: dict = {}
    cells = []
    for c, verts in enumerate(f.cells):
        pts = np.array(verts, dtype=float) / f.level
        vals = np.einsum("qmk,vk->vqm", f.lin[c], pts) + f.a[c][None]
        for q in range(f.Q):
            lifted = []
            for vi, g in enumerate(verts):
                val = vals[vi, q]
                bucket = reps.setdefault(g, [])
                for r in bucket:
                    if np.max(np.abs(r - val)) <= SNAP_TOL:
                        val = r
                        break
                else:
                    bucket.append(val)
                lifted.append(np.concatenate([pts[vi], val]))
            cells.append((Cell(np.array(lifted)), 1))
    return PolyhedralChain(f.k + f.m, f.k, tuple(cells))


def _sheet_area(lmat: np.ndarray) -> float:
    k = lmat.shape[1]
    return math.sqrt(float(np.linalg.det(np.eye(k) + lmat.T @ lmat)))


def area_formula_mass(f: PiecewiseAffineQ) -> float:
    vol = cell_volume(f.k, f.level)
    return float(sum(vol * sum(_sheet_area(f.lin[c, q]) for q in range(f.Q))
                     for c in range(f.n_cells)))


def _check_q_integrand(F: QIntegrand, f: PiecewiseAffineQ):
    if F.Q != f.Q:
        raise QValuedError(f"integrand has Q = {F.Q}, function has Q = {f.Q}")
    if (F.base.k, F.base.n - F.base.k) != (f.k, f.m):
        raise QValuedError(
            f"integrand acts on (k={F.base.k}, m={F.base.n - F.base.k}) gradients, "
            f"function has (k={f.k}, m={f.m})")


def q_energy(F: QIntegrand, f: PiecewiseAffineQ) -> float:
    """Cellwise sum of volume times the classical integrand over sheets."""
    _check_q_integrand(F, f)
    vol = cell_volume(f.k, f.level)
    return float(sum(vol * sum(eval_classical(F.base, f.lin[c, q]) for q in range(f.Q))
                     for c in range(f.n_cells)))


def q_energy_via_graph(F: QIntegrand, f: PiecewiseAffineQ) -> float:
    _check_q_integrand(F, f)
    return energy(F.base.underlying, graph_current(f))


# ---------------------------------------------------------------------------
# affine multigraphs and graph test pairs


@dataclass(frozen=True, eq=False)
class AffineMultigraph:
    """h(x) = sum_j Q_j [[a_j + L_j x]] with distinct a_j."""

    groups: tuple  # of (Q_j, a_j, L_j)

    def __post_init__(self):
        if not self.groups:
            raise QValuedError("multigraph needs at least one group")
        groups = []
        for qj, a, lmat in self.groups:
            a = np.atleast_1d(np.array(a, dtype=float))
            lmat = np.array(lmat, dtype=float).reshape(a.shape[0], -1)
            if int(qj) < 1:
                raise QValuedError("group multiplicities must be positive")
            groups.append((int(qj), a, lmat))
        shapes = {(g[1].shape, g[2].shape) for g in groups}
        if len(shapes) != 1:
            raise QValuedError("all groups must share (m, k)")
        for i in range(len(groups)):
            for j in range(i):
                if np.allclose(groups[i][1], groups[j][1], atol=1e-12, rtol=0):
                    raise QValuedError("the offsets a_j must be pairwise distinct")
        object.__setattr__(self, "groups", tuple(groups))

    @property
    def Q(self) -> int:
        return sum(g[0] for g in self.groups)

    @property
    def m(self) -> int:
        return self.groups[0][1].shape[0]

    @property
    def k(self) -> int:
        return self.groups[0][2].shape[1]

    def sheets(self):
        """(a, L) per sheet, groups expanded by multiplicity."""
        for qj, a, lmat in self.groups:
            for _ in range(qj):
                yield a, lmat

    def to_piecewise(self, level: int = 1) -> PiecewiseAffineQ:
        nc = len(kuhn_grid(self.k, level))
        a = np.array([s[0] for s in self.sheets()])
        lin = np.array([s[1] for s in self.sheets()])
        return PiecewiseAffineQ(self.k, self.m, self.Q, level,
                                np.broadcast_to(a, (nc,) + a.shape),
                                np.broadcast_to(lin, (nc,) + lin.shape))

    def to_json(self) -> dict:
        return {"k": self.k, "m": self.m,
                "groups": [{"Q": q, "a": a.tolist(), "L": lmat.tolist()} for q, a, lmat in self.groups]}

    @classmethod
    def from_json(cls, obj: dict) -> "AffineMultigraph":
        try:
            return cls(tuple((g["Q"], g["a"], g["L"]) for g in obj["groups"]))
        except (KeyError, TypeError) as exc:
            raise QValuedError(f"malformed multigraph JSON: {exc}") from None


def load_multigraph(path) -> AffineMultigraph:
    with open(path, encoding="utf-8") as fh:
        return AffineMultigraph.from_json(json.load(fh))


def eval_h(h: AffineMultigraph, x) -> QPoint:
    x = np.asarray(x, dtype=float)
    return QPoint(np.array([a + lmat @ x for a, lmat in h.sheets()]))


def boundary_faces(k: int, level: int):
    """(cell index, face vertex array) for cell faces lying on the cube boundary."""
    out = []
    for c, verts in enumerate(kuhn_grid(k, level)):
        for i in range(len(verts)):
            face = verts[:i] + verts[i + 1:]
            arr = np.array(face)
            on_side = any(np.all(arr[:, ax] == 0) or np.all(arr[:, ax] == level) for ax in range(k))
            if on_side:
                out.append((c, arr.astype(float) / level))
    return out


@dataclass(frozen=True, eq=False)
class GraphTestPair:
    f: PiecewiseAffineQ
    h: AffineMultigraph
    boundary_defect: float
    strict: bool = False

    @property
    def h_piecewise(self) -> PiecewiseAffineQ:
        return self.h.to_piecewise(self.f.level)


def make_graph_test_pair(f: PiecewiseAffineQ, h: AffineMultigraph, strict: bool = False,
                         tol: float = BOUNDARY_TOL, check_chains: bool = True) -> GraphTestPair:
    """Validate that f agrees with h on the cube boundary.

    Checks metric_G at the vertices and barycentre of every boundary face.
    ``strict`` additionally requires a single sheet matching per face that is
    valid at all probe points (per-sheet agreement, not just as multisets).
    """
    if (f.k, f.m, f.Q) != (h.k, h.m, h.Q):
        raise QValuedError(f"shape mismatch: f has (k, m, Q) = {(f.k, f.m, f.Q)}, h has {(h.k, h.m, h.Q)}")
    check_continuity(f)
    worst, where = 0.0, None
    h_sheets = list(h.sheets())
    for c, pts in boundary_faces(f.k, f.level):
        probes = _face_probe_points(pts)
        for x in probes:
            g = metric_G(QPoint(f.sheet_values(c, x)), eval_h(h, x))
            if g > worst:
                worst, where = g, x
        if strict:
            bary = probes[-1]
            fv = f.sheet_values(c, bary)
            hv = eval_h(h, bary).points
            cost = ((fv[:, None, :] - hv[None, :, :]) ** 2).sum(axis=2)
            perm, _ = min_cost_assignment(cost)
            for x in probes:
                fx = f.sheet_values(c, x)
                for q in range(f.Q):
                    a, lmat = h_sheets[perm[q]]
                    g = float(np.linalg.norm(fx[q] - (a + lmat @ x)))
                    if g > worst:
                        worst, where = g, x
    if worst > tol:
        raise QValuedError(f"f and h disagree on the boundary: G = {worst:.3g} at x = {where.tolist()}")
    pair = GraphTestPair(f, h, worst, strict)
    if check_chains:
        bf = boundary(graph_current(f, check=False))
        bh = boundary(graph_current(pair.h_piecewise, check=False))
        if not chains_equal(bf, bh, 1e-9):
            raise QValuedError("graph boundaries differ although boundary values agree")
    return pair


def verify_uqc(F: QIntegrand, c: float, pair: GraphTestPair) -> float:
    """E_F(f) - E_F(h) - c (M(G_f) - M(G_h))."""
    hp = pair.h_piecewise
    return (q_energy(F, pair.f) - q_energy(F, hp)
            - c * (area_formula_mass(pair.f) - area_formula_mass(hp)))


# ---------------------------------------------------------------------------
# samplers


def _is_interior(g, level) -> bool:
    return all(0 < c < level for c in g)


def random_q_function(k: int, m: int, Q: int, level: int, lipschitz_bound: float,
                      boundary: AffineMultigraph, seed=None, pin_boundary: bool = True) -> PiecewiseAffineQ:
    """Perturb the sheets of ``boundary`` at interior grid vertices.

    Offsets are uniform in [-amp, amp]^m with amp = lipschitz_bound / (2 level),
    so each sheet's slope changes by at most about lipschitz_bound. Sheets keep
    their labels, which makes the result continuous; boundary vertices stay
    on h unless ``pin_boundary`` is False.
    """
    if level < 1:
        raise QValuedError("level must be >= 1")
    if (boundary.k, boundary.m, boundary.Q) != (k, m, Q):
        raise QValuedError("boundary multigraph does not match (k, m, Q)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    amp = lipschitz_bound / (2 * level)
    sheets = list(boundary.sheets())
    values = np.empty((level + 1,) * k + (Q, m))
    moved = set()
    for g in product(range(level + 1), repeat=k):
        x = np.array(g, dtype=float) / level
        for q, (a, lmat) in enumerate(sheets):
            values[g][q] = a + lmat @ x
        if amp > 0 and (_is_interior(g, level) or not pin_boundary):
            values[g] += rng.uniform(-amp, amp, size=(Q, m))
            moved.add(g)
    f = PiecewiseAffineQ.from_vertex_values(k, m, Q, level, values)
    # cells without a moved vertex keep the sheets of h verbatim, so f = h exactly there
    hp = boundary.to_piecewise(level)
    keep = np.array([not moved.intersection(verts) for verts in kuhn_grid(k, level)])
    a = np.where(keep[:, None, None], hp.a, f.a)
    lin = np.where(keep[:, None, None, None], hp.lin, f.lin)
    return PiecewiseAffineQ(k, m, Q, level, a, lin)


def random_affine_multigraph(k: int, m: int, Q: int, seed=None, n_groups: int | None = None,
                             scale: float = 1.0) -> AffineMultigraph:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n_groups is None:
        n_groups = int(rng.integers(1, Q + 1))
    n_groups = max(1, min(n_groups, Q))
    # split Q into n_groups positive parts
    cuts = sorted(rng.choice(np.arange(1, Q), size=n_groups - 1, replace=False)) if n_groups > 1 else []
    sizes = np.diff([0, *cuts, Q])
    groups = []
    for j, qj in enumerate(sizes):
        a = rng.standard_normal(m) + 3.0 * j  # well separated offsets
        groups.append((int(qj), a, scale * rng.standard_normal((m, k))))
    return AffineMultigraph(tuple(groups))


def tent_function(t: float, level: int = 2) -> PiecewiseAffineQ:
    """k = m = Q = 1 tent of height t over [0, 1], zero at both ends."""
    if level % 2:
        raise QValuedError("tent needs an even level")
    xs = np.linspace(0.0, 1.0, level + 1)
    vals = t * (1 - np.abs(2 * xs - 1))
    return PiecewiseAffineQ.from_vertex_values(1, 1, 1, level, vals.reshape(level + 1, 1, 1))


def zero_multigraph(k: int = 1, m: int = 1, Q: int = 1) -> AffineMultigraph:
    if Q != 1:
        raise QValuedError("a zero multigraph with distinct offsets needs Q = 1 (use groups)")
    return AffineMultigraph(((1, np.zeros(m), np.zeros((m, k))),))
