"""Rational-slope approximation of decompositions, in exact arithmetic.

Rational unit simple k-vectors come from rational orthogonal matrices: an
orthogonal R is written as D * cayley(A) with D a diagonal sign matrix and A
skew-symmetric; rounding A by continued fractions (``Fraction.limit_denominator``)
and mapping back gives an exactly orthogonal rational matrix, whose first k
columns wedge to an exactly unit rational k-vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, product

import numpy as np

from . import _exact
from .exterior import (KVector, OrientedPlane, format_scalar, inner,
                       stacked_identity, wedge_cols)
from .polyconvexity import Decomposition
from .simplex import LPInfeasible, simplex_min

MAX_DOUBLINGS = 60


class ApproximationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RationalSimpleKVector:
    frame: np.ndarray  # n x k, Fractions
    kvector: KVector  # rational mode, wedge of the frame
    denominator: int = 1
    rotation: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.kvector.exact:
            raise ValueError("kvector must be in rational mode")
        if self.kvector.is_zero():
            raise ValueError("rational simple k-vector must be nonzero")

    @property
    def unit(self) -> KVector:
        """Float copy scaled to unit length."""
        f = self.kvector.as_float()
        return f / f.norm()

    def to_json(self) -> dict:
        return {"frame": [[format_scalar(x) for x in row] for row in self.frame],
                "kvector": self.kvector.to_json()}

    @classmethod
    def from_frame(cls, frame, denominator: int = 1) -> "RationalSimpleKVector":
        frame = _exact.fraction_array(frame)
        return cls(frame, wedge_cols(frame), denominator)


# ---------------------------------------------------------------------------
# rational rotations


def _complete_rotation(w: np.ndarray) -> np.ndarray:
    """Orthogonal n x n matrix whose first k columns are the orthonormal frame w."""
    n, k = w.shape
    q, r = np.linalg.qr(np.hstack([w, np.eye(n)]), mode="complete")
    q = q[:, :n].copy()
    q[:, :k] = q[:, :k] * np.sign(np.diag(r)[:k])
    return q


def _best_signs(r: np.ndarray) -> np.ndarray:
    """Diagonal signs D maximising |det(I + D R)| so the Cayley inverse is well posed."""
    n = r.shape[0]
    if n <= 10:
        cands = product((1.0, -1.0), repeat=n)
        return np.array(max(cands, key=lambda s: abs(np.linalg.det(np.eye(n) + np.array(s)[:, None] * r))))
    signs = np.ones(n)
    for i in range(n):
        trial = signs.copy()
        trial[i] = -1.0
        if abs(np.linalg.det(np.eye(n) + trial[:, None] * r)) > abs(np.linalg.det(np.eye(n) + signs[:, None] * r)):
            signs = trial
    return signs


def _cayley_exact(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    eye = _exact.identity(n)
    return _exact.solve(eye + a, eye - a)


@dataclass
class _RotationParams:
    signs: np.ndarray
    skew: np.ndarray


def _rotation_params(w: np.ndarray) -> _RotationParams:
    r = _complete_rotation(w)
    signs = _best_signs(r)
    c = signs[:, None] * r
    n = r.shape[0]
    a = np.linalg.solve((np.eye(n) + c).T, (np.eye(n) - c).T).T
    return _RotationParams(signs, 0.5 * (a - a.T))


def _rational_rotation(params: _RotationParams, den: int) -> np.ndarray:
    n = params.skew.shape[0]
    a = _exact.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            q = Fraction(float(params.skew[i, j])).limit_denominator(den)
            a[i, j], a[j, i] = q, -q
    c = _cayley_exact(a)
    for i in range(n):
        if params.signs[i] < 0:
            c[i] = -c[i]
    return c


def _dist_sq(a: KVector, b) -> Fraction:
    """Exact |a - b|^2; ``b`` may be a float KVector (floats are exact rationals)."""
    bb = b.as_exact() if isinstance(b, KVector) else KVector(a.n, a.k, _exact.fraction_array(b))
    diff = a - bb
    return diff.norm_sq()


def rational_simple_approx(eta: OrientedPlane, eps: float, start_den: int = 1,
                           accept=None) -> RationalSimpleKVector:
    """Exactly unit rational simple k-vector within ``eps`` of ``eta``.

    The denominator bound on the Cayley parameters doubles from ``start_den``
    until the distance (checked exactly) drops below eps and the optional
    predicate ``accept`` holds.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    target = eta.kvector.as_float()
    if not target.allclose(target / target.norm(), 1e-9):
        raise ValueError("eta must be a unit k-vector")
    w, _ = np.linalg.qr(np.asarray(eta.frame, dtype=float))
    w = w * np.sign(np.diag(np.linalg.qr(np.asarray(eta.frame, dtype=float))[1]))
    if inner(wedge_cols(w), target) < 0:
        w[:, 0] = -w[:, 0]
    params = _rotation_params(w)
    eps_sq = _exact.to_fraction(eps) ** 2
    den = max(1, int(start_den))
    for _ in range(MAX_DOUBLINGS + 1):
        rot = _rational_rotation(params, den)
        frame = rot[:, : eta.k]
        kv = wedge_cols(frame)
        cand = RationalSimpleKVector(frame, kv, den, rot)
        if _dist_sq(kv, target) < eps_sq and (accept is None or accept(cand)):
            return cand
        den *= 2
    raise ApproximationError(
        f"no rational approximation within {eps} after {MAX_DOUBLINGS} denominator doublings")


# ---------------------------------------------------------------------------
# Caratheodory reduction


def _as_column(v) -> np.ndarray:
    if isinstance(v, KVector):
        return v.coeffs
    if isinstance(v, RationalSimpleKVector):
        return v.kvector.coeffs
    return np.asarray(v)


def caratheodory_reduce(target, atoms, weights, tol: float = 1e-10):
    """Rewrite sum w_i x_i = target with linearly independent support.

    Repeatedly takes a null combination z of the active atoms, oriented to
    have a positive entry, and steps lambda -> lambda - t z with the largest t
    keeping lambda >= 0; one weight hits zero per step. Exact when all inputs
    are rational. Returns (atoms, weights) restricted to the support.
    """
    atoms = list(atoms)
    if len(atoms) != len(weights):
        raise ValueError("atoms and weights differ in length")
    if not atoms:
        raise ValueError("empty combination")
    cols = [_as_column(a) for a in atoms]
    t_col = _as_column(target)
    exact = all(np.asarray(c).dtype == object for c in cols) and np.asarray(t_col).dtype == object
    if exact:
        x = np.stack([_exact.fraction_array(c) for c in cols], axis=1)
        lam = [_exact.to_fraction(w) for w in weights]
        tgt = _exact.fraction_array(t_col)
    else:
        x = np.stack([np.asarray(c, dtype=float) for c in cols], axis=1)
        lam = [float(w) for w in weights]
        tgt = np.asarray(t_col, dtype=float)
    if any(w < 0 for w in lam):
        raise ValueError("weights must be non-negative")

    def combo(idx, lam_):
        if exact:
            out = _exact.zeros(x.shape[0])
            for i in idx:
                out = out + lam_[i] * x[:, i]
            return out
        return x[:, idx] @ np.array([lam_[i] for i in idx]) if idx else np.zeros(x.shape[0])

    scale = max(1.0, float(np.max(np.abs(np.asarray(tgt, dtype=float)), initial=0.0)))
    active = [i for i in range(len(lam)) if lam[i] > 0]
    resid = combo(active, lam) - tgt
    if exact:
        if any(r != 0 for r in resid):
            raise ValueError("input combination does not reproduce the target")
    elif np.max(np.abs(resid), initial=0.0) > tol * scale:
        raise ValueError(f"input combination misses the target by {np.max(np.abs(resid)):.3g}")

    while active:
        sub = x[:, active]
        if exact:
            ns = _exact.nullspace(sub)
            if ns.shape[1] == 0:
                break
            z = list(ns[:, 0])
        else:
            _, s, vt = np.linalg.svd(sub)
            rank = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
            if rank == len(active):
                break
            z = list(vt[-1])
        if all(v <= 0 for v in z):
            z = [-v for v in z]
        best_t, best_j = None, None
        for j, zj in enumerate(z):
            if zj > 0:
                t = lam[active[j]] / zj
                if best_t is None or t < best_t:
                    best_t, best_j = t, j
        for j, zj in enumerate(z):
            lam[active[j]] = lam[active[j]] - best_t * zj
        lam[active[best_j]] = Fraction(0) if exact else 0.0
        active = [i for i in active if lam[i] > (0 if exact else 1e-15)]
    if not exact and active:
        # restore the target to working precision on the final support
        sol, *_ = np.linalg.lstsq(x[:, active], tgt, rcond=None)
        for i, v in zip(active, sol):
            lam[i] = float(v)
        if any(lam[i] < 0 for i in active):
            raise ValueError("float Caratheodory reduction lost non-negativity")
    return [atoms[i] for i in active], [lam[i] for i in active]


# ---------------------------------------------------------------------------
# approximate decompositions


@dataclass
class RationalDecomposition:
    eta0_tilde: RationalSimpleKVector  # norm = scale (rational, slightly above 1)
    atoms: list  # of (Fraction weight, RationalSimpleKVector)
    d_original: int
    scale: Fraction
    bounds: dict
    eps: float

    @property
    def N(self) -> int:
        return len(self.atoms)

    def residual(self) -> KVector:
        total = self.eta0_tilde.kvector
        for w, a in self.atoms:
            total = total - a.kvector * w
        return total

    def identity_holds(self) -> bool:
        return self.residual().is_zero()

    def all_bounds_hold(self) -> bool:
        return all(v["ok"] for v in self.bounds.values())

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "d_original": self.d_original,
            "N": self.N,
            "scale": format_scalar(self.scale),
            "eta0_tilde": self.eta0_tilde.to_json(),
            "atoms": [{"m": format_scalar(w), "eta_tilde": a.to_json()} for w, a in self.atoms],
            "identity_exact": self.identity_holds(),
            "bounds": self.bounds,
        }


def _sqrt_float(q: Fraction) -> float:
    return math.sqrt(float(q))


def approximate_decomposition(dec: Decomposition, eps: float) -> RationalDecomposition:
    """Rational-slope approximation of a positively oriented decomposition.

    Output: rational eta0~ with |eta0~ - eta0| < eps/2 and (eta0~ - eta0).eta0 > 0,
    exactly unit rational atoms eta~_i with the original weights satisfying both
    m_i |eta~_i - eta_i| < eps/2d and m_i |eta~_i - eta_i| |eta0~| < zeta.eta0~ / d,
    plus at most C(n, k) extra rational simple atoms with non-negative weights,
    such that eta0~ = sum m_i eta~_i holds exactly.

    eta0~ is an exactly unit rational approximation scaled by 1 + delta with
    delta rational: a unit approximation can never satisfy the sign
    condition, since (u - eta0).eta0 = u.eta0 - 1 <= 0 for unit u.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    dec.validate()
    if not dec.is_positive():
        raise ApproximationError("decomposition must be positively oriented with respect to eta0")
    n, k, d = dec.n, dec.k, dec.d
    big_m = math.comb(n, k)
    eps_q = _exact.to_fraction(eps)
    m = [_exact.to_fraction(w) for w in dec.weights]
    eta0 = dec.eta0.kvector.as_float().as_exact()
    etas = [p.kvector.as_float().as_exact() for p in dec.planes]
    eta0_sq = eta0.norm_sq()

    # step 1: eta0~ = (1 + delta) * u0, u0 exactly unit
    delta = min(eps_q / 8, Fraction(1, 8))
    scale = 1 + delta

    def step1_ok(c: RationalSimpleKVector) -> bool:
        t0 = c.kvector * scale
        return scale * inner(c.kvector, eta0) > eta0_sq and _dist_sq(t0, eta0) < (eps_q / 2) ** 2

    den = 1
    for _attempt in range(MAX_DOUBLINGS):
        hat0 = rational_simple_approx(dec.eta0, float(eps_q / 4), den, step1_ok)
        tilde0 = hat0.kvector * scale
        zeta = tilde0 - eta0
        z_dot = inner(zeta, tilde0)  # > 0

        # step 2: atoms, tighter of the two bounds, positive w.r.t. eta0~
        approx = []
        for i, (mi, p) in enumerate(zip(m, dec.planes)):
            lim_stmt = eps_q / (2 * d * mi)
            lim_proof = z_dot / (d * mi * scale)
            lim = min(lim_stmt, lim_proof)

            def ok(c, i=i, lim=lim):
                return _dist_sq(c.kvector, etas[i]) < lim ** 2 and inner(c.kvector, tilde0) > 0

            approx.append(rational_simple_approx(p, float(lim), 1, ok))

        # step 3: residual r = beta e1 + w'
        r = tilde0
        for mi, a in zip(m, approx):
            r = r - a.kvector * mi
        e1 = hat0.kvector  # = eta0~ / |eta0~|, exactly unit
        beta = inner(r, e1)
        if beta > 0:
            break
        den = max(2 * hat0.denominator, 2)
    else:
        raise ApproximationError("could not make the residual positively oriented; try a smaller eps")
    w_perp = r - e1 * beta

    # step 4: rho with |w'| < beta rho; spanning scale s with s^2 >= 4 rho^2 (M - 1)
    wp_sq = w_perp.norm_sq()
    if wp_sq == 0:
        rho = Fraction(1)
    else:
        rho = Fraction(1.5 * _sqrt_float(wp_sq) / float(beta) + 1e-12).limit_denominator(10**12)
        while rho ** 2 * beta ** 2 <= wp_sq:
            rho *= 2
    s_int = max(1, math.ceil(2 * float(rho) * math.sqrt(big_m - 1)) + 1)
    while Fraction(s_int) ** 2 < 4 * rho ** 2 * (big_m - 1):
        s_int += 1

    # steps 5-6: rational simple atoms around eta0~ and the convex-combination LP
    rot = hat0.rotation
    target = w_perp / beta
    for _ in range(8):
        cands, us = _spanning_atoms(rot, n, k, Fraction(s_int), scale, e1)
        a_eq = np.concatenate(
            [np.stack([u.coeffs for u in us], axis=1),
             np.array([[Fraction(1)] * len(us)], dtype=object)], axis=0)
        b_eq = np.concatenate([target.coeffs, np.array([Fraction(1)], dtype=object)])
        try:
            lp = simplex_min(_exact.zeros(len(us)), a_eq, b_eq)
            break
        except LPInfeasible:
            s_int *= 2
    else:
        raise ApproximationError("spanning LP infeasible (should not happen)")
    y = lp.x
    extra = [(beta * y[j] / scale, cands[j]) for j in range(len(cands)) if y[j] != 0]

    # step 7: Caratheodory on r = sum weight_j s_j
    if extra:
        red_atoms, red_w = caratheodory_reduce(
            r.coeffs, [a.kvector.coeffs for _, a in extra], [w for w, _ in extra])
        lookup = {id(a.kvector.coeffs): a for _, a in extra}
        extra = [(w, lookup[id(c)]) for c, w in zip(red_atoms, red_w)]

    atoms = [(mi, a) for mi, a in zip(m, approx)] + extra
    eta0_tilde = RationalSimpleKVector(hat0.frame.copy(), tilde0, hat0.denominator, hat0.rotation)
    fr = eta0_tilde.frame
    fr[:, 0] = fr[:, 0] * scale
    eta0_tilde = RationalSimpleKVector(fr, wedge_cols(fr), hat0.denominator, hat0.rotation)
    out = RationalDecomposition(eta0_tilde, atoms, d, scale, {}, float(eps))
    out.bounds = lemma_bounds(out, dec, z_dot)
    return out


def _spanning_atoms(rot, n, k, s, scale, e1):
    """Rational simple k-vectors s_j = scale * Lambda_k(rot) wedge_M(X_j).

    X_j runs over s * (signed partial permutation matrices): for each row set
    A, column set B of equal size p and sign vector, X has entries +-s on the
    diagonal matching of A x B. In coordinates adapted to e1 the points
    u_j = s_j / (s_j . e1) - e1 then have a convex hull containing
    +- s^p times every unit coordinate vector of e1^perp, hence the ball of
    radius s / sqrt(M - 1).
    """
    cands, us = [], []
    for p in range(1, min(k, n - k) + 1):
        for rows in combinations(range(n - k), p):
            for cols in combinations(range(k), p):
                for signs in product((1, -1), repeat=p):
                    x = _exact.zeros((n - k, k))
                    for r_, c_, sg in zip(rows, cols, signs):
                        x[r_, c_] = sg * s
                    frame = rot[:, :] @ stacked_identity(x)
                    frame[:, 0] = frame[:, 0] * scale
                    kv = wedge_cols(frame)
                    dot = inner(kv, e1)
                    if dot != scale:
                        raise AssertionError("adapted-coordinate construction broke orientation")
                    cands.append(RationalSimpleKVector(frame, kv, 0))
                    us.append(kv / dot - e1)
    return cands, us


def lemma_bounds(rd: RationalDecomposition, dec: Decomposition, z_dot=None) -> dict:
    """Evaluate every approximation guarantee exactly; each entry has value, limit, ok."""
    eps_q = _exact.to_fraction(rd.eps)
    d = rd.d_original
    eta0 = dec.eta0.kvector.as_float().as_exact()
    tilde0 = rd.eta0_tilde.kvector
    if z_dot is None:
        z_dot = inner(tilde0 - eta0, tilde0)
    out = {}
    d0 = _dist_sq(tilde0, eta0)
    out["eta0_close"] = {"value": _sqrt_float(d0), "limit": float(eps_q / 2), "ok": d0 < (eps_q / 2) ** 2}
    sign = inner(tilde0 - eta0, eta0)
    out["eta0_sign"] = {"value": float(sign), "limit": 0.0, "ok": sign > 0}
    atom_ok, proof_ok, worst_stmt, worst_proof = True, True, 0.0, 0.0
    for i, (p, (mi, a)) in enumerate(zip(dec.planes, rd.atoms[:d])):
        di = _dist_sq(a.kvector, p.kvector.as_float().as_exact())
        lim = eps_q / (2 * d * mi)
        atom_ok &= di < lim ** 2
        worst_stmt = max(worst_stmt, _sqrt_float(di) / float(lim))
        proof_lhs_sq = mi ** 2 * di
        proof_lim = z_dot / d
        proof_ok &= proof_lhs_sq < proof_lim ** 2
        worst_proof = max(worst_proof, _sqrt_float(proof_lhs_sq) / float(proof_lim))
    out["atoms_close"] = {"value": worst_stmt, "limit": 1.0, "ok": bool(atom_ok),
                          "note": "max over i of |eta~_i - eta_i| / (eps / (2 d m_i))"}
    out["atoms_close_residual"] = {"value": worst_proof, "limit": 1.0, "ok": bool(proof_ok),
                                   "note": "max over i of m_i |eta~_i - eta_i| / (zeta . eta0~ / d)"}
    extra = rd.N - d
    big_m = math.comb(dec.n, dec.k)
    out["extra_atoms"] = {"value": extra, "limit": big_m, "ok": 0 <= extra <= big_m}
    pos = [inner(a.kvector, tilde0) for _, a in rd.atoms]
    out["positive_orientation"] = {"value": float(min(pos)), "limit": 0.0, "ok": all(v > 0 for v in pos)}
    ws = [w for w, _ in rd.atoms[d:]]
    out["extra_weights_nonnegative"] = {"value": float(min(ws)) if ws else 0.0, "limit": 0.0,
                                        "ok": all(w >= 0 for w in ws)}
    out["unit_atoms"] = {"value": d, "limit": d,
                         "ok": all(a.kvector.norm_sq() == 1 for _, a in rd.atoms[:d])}
    ident = rd.identity_holds()
    out["identity_exact"] = {"value": 0.0 if ident else rd.residual().norm(), "limit": 0.0, "ok": ident}
    return out
