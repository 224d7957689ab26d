"""Uniform polyconvexity: instance checks, counterexample search, LP certificates.

For a decomposition eta0 = sum m_i eta_i of a unit simple k-vector into unit
simple k-vectors, the UPC(c) gap is

    sum m_i Psi(eta_i) - Psi(eta0) - c * (sum m_i |eta_i| - |eta0|)

and Psi is UPC(c) when the gap is non-negative for every decomposition.
``orientation_mode="positive"`` restricts to atoms with eta_i . eta0 > 0.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exterior import (KVector, OrientedPlane, factor_simple, inner, is_simple,
                       parse_scalar, random_plane)
from .integrands import GeometricIntegrand
from .simplex import simplex_min

COUNTEREXAMPLE_TOL = 1e-9
ORIENTATION_MODES = ("any", "positive")

SAMPLED_CAVEAT = (
    "sampled certificate: the LP only covers the sampled reference planes and "
    "atoms, so passing is evidence for UPC(c) and not a proof")


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Decomposition:
    eta0: OrientedPlane
    atoms: tuple  # of (weight, OrientedPlane)

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple((w, p) for w, p in self.atoms))

    @property
    def n(self) -> int:
        return self.eta0.n

    @property
    def k(self) -> int:
        return self.eta0.k

    @property
    def d(self) -> int:
        return len(self.atoms)

    @property
    def weights(self) -> list:
        return [w for w, _ in self.atoms]

    @property
    def planes(self) -> list[OrientedPlane]:
        return [p for _, p in self.atoms]

    def combination(self) -> KVector:
        total = KVector.zero(self.n, self.k, self.eta0.kvector.exact)
        for w, p in self.atoms:
            total = total + p.kvector * w
        return total

    def residual(self) -> float:
        return (self.combination().as_float() - self.eta0.kvector.as_float()).norm()

    def bracket(self) -> float:
        """sum m_i |eta_i| - |eta0|, non-negative by the triangle inequality."""
        return float(sum(float(w) * p.kvector.norm() for w, p in self.atoms)) - self.eta0.kvector.norm()

    def validate(self, tol: float = 1e-9) -> None:
        if self.d < 1:
            raise DecompositionError("a decomposition needs at least one atom")
        self.eta0.validate()
        for w, p in self.atoms:
            if not w > 0:
                raise DecompositionError(f"weights must be positive, got {w}")
            if (p.n, p.k) != (self.n, self.k):
                raise DecompositionError("atom lives in a different Lambda_k R^n")
            p.validate()
        if self.eta0.kvector.exact:
            if not self.combination().equals(self.eta0.kvector):
                raise DecompositionError("sum m_i eta_i != eta0 (exact)")
        elif self.residual() > tol:
            raise DecompositionError(f"sum m_i eta_i differs from eta0 by {self.residual():.3g}")

    def is_positive(self) -> bool:
        return all(inner(p.kvector, self.eta0.kvector) > 0 for p in self.planes)

    def to_json(self) -> dict:
        return {"eta0": self.eta0.to_json(),
                "atoms": [{"m": float(w), "eta": p.to_json()} for w, p in self.atoms]}

    @classmethod
    def from_json(cls, obj: dict) -> "Decomposition":
        eta0 = OrientedPlane.from_json(obj["eta0"])
        atoms = [(float(parse_scalar(a["m"])), OrientedPlane.from_json(a["eta"])) for a in obj["atoms"]]
        return cls(eta0, atoms)


def _check_mode(mode: str) -> None:
    if mode not in ORIENTATION_MODES:
        raise ValueError(f"orientation_mode must be one of {ORIENTATION_MODES}")


def check_instance(psi: GeometricIntegrand, c: float, dec: Decomposition,
                   orientation_mode: str = "any") -> float:
    _check_mode(orientation_mode)
    dec.validate()
    if orientation_mode == "positive" and not dec.is_positive():
        raise DecompositionError("atom not positively oriented with respect to eta0")
    energy = sum(float(w) * psi(p.kvector) for w, p in dec.atoms) - psi(dec.eta0.kvector)
    return energy - c * dec.bracket()


# ---------------------------------------------------------------------------
# sampling


def _always_simple(n: int, k: int) -> bool:
    return k <= 1 or k >= n - 1


def _plane_in_subspace(basis: np.ndarray, k: int, rng) -> OrientedPlane:
    return OrientedPlane.from_frame(basis @ rng.standard_normal((basis.shape[1], k)))


def random_decomposition(n: int, k: int, d: int, seed=None, orientation_mode: str = "any",
                         max_tries: int = 10_000, spread: float = 0.6) -> Decomposition:
    """Random decomposition eta0 = sum m_i eta_i with d atoms.

    When every k-vector of R^n is simple the atoms are uniform on the
    Grassmannian. Otherwise a generic sum of simple k-vectors is never
    simple, so the atoms are drawn inside a random (k+1)-dimensional
    subspace, where every k-vector is simple. In positive mode atoms are
    drawn around a random reference plane and reflected into its half-space.
    """
    _check_mode(orientation_mode)
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    last = "none"
    for _ in range(max_tries):
        if _always_simple(n, k):
            sub = np.eye(n)
        else:
            sub, _ = np.linalg.qr(rng.standard_normal((n, k + 1)))
        dim = sub.shape[1]
        if orientation_mode == "positive":
            ref_frame = sub @ rng.standard_normal((dim, k))
            ref = OrientedPlane.from_frame(ref_frame).kvector
            planes = []
            for _ in range(d):
                p = OrientedPlane.from_frame(ref_frame + spread * (sub @ rng.standard_normal((dim, k))))
                planes.append(p if inner(p.kvector, ref) > 0 else -p)
        else:
            planes = [_plane_in_subspace(sub, k, rng) for _ in range(d)]
        m = rng.uniform(0.1, 1.0, size=d)
        sigma = KVector.zero(n, k)
        for w, p in zip(m, planes):
            sigma = sigma + p.kvector * w
        s = sigma.norm()
        if s <= 0.1:
            last = f"|sigma| = {s:.3g} <= 0.1"
            continue
        if not is_simple(sigma):
            last = "sigma not simple"
            continue
        eta0_kv = sigma / s
        if orientation_mode == "positive" and any(inner(p.kvector, eta0_kv) <= 0 for p in planes):
            last = "atom not positive w.r.t. eta0"
            continue
        eta0 = OrientedPlane(eta0_kv, OrientedPlane.from_frame(factor_simple(eta0_kv)).frame)
        dec = Decomposition(eta0, [(float(w / s), p) for w, p in zip(m, planes)])
        dec.validate()
        return dec
    raise DecompositionError(
        f"random_decomposition(n={n}, k={k}, d={d}) exhausted {max_tries} tries; last rejection: {last}")


def _reweight(dec: Decomposition, m: np.ndarray, orientation_mode: str) -> Decomposition | None:
    sigma = KVector.zero(dec.n, dec.k)
    for w, p in zip(m, dec.planes):
        sigma = sigma + p.kvector * w
    s = sigma.norm()
    if s <= 1e-12 or not is_simple(sigma):
        return None
    eta0_kv = sigma / s
    if orientation_mode == "positive" and any(inner(p.kvector, eta0_kv) <= 0 for p in dec.planes):
        return None
    eta0 = OrientedPlane(eta0_kv, OrientedPlane.from_frame(factor_simple(eta0_kv)).frame)
    return Decomposition(eta0, [(float(w / s), p) for w, p in zip(m, dec.planes)])


def search_counterexample(psi: GeometricIntegrand, c: float, budget: int,
                          sampler_params: dict | None = None, seed: int = 0):
    """First decomposition with gap < -1e-9, or None.

    ``sampler_params`` keys: d_min (2), d_max (4), orientation_mode ("any"),
    refine_steps (budget // 10). After the random phase the most negative
    samples are refined by multiplicative weight perturbations.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    sp = dict(sampler_params or {})
    d_min, d_max = int(sp.get("d_min", 2)), int(sp.get("d_max", 4))
    mode = sp.get("orientation_mode", "any")
    refine_steps = int(sp.get("refine_steps", max(1, budget // 10)))
    rng = np.random.default_rng(seed)
    best: list[tuple[float, int, Decomposition]] = []
    for i in range(budget):
        dec = random_decomposition(psi.n, psi.k, int(rng.integers(d_min, d_max + 1)), rng, mode)
        gap = check_instance(psi, c, dec, mode)
        if gap < -COUNTEREXAMPLE_TOL:
            return dec, gap
        best.append((gap, i, dec))
        best.sort(key=lambda t: (t[0], t[1]))
        del best[5:]
    for step in range(refine_steps):
        gap0, idx, dec = best[step % len(best)]
        m = np.array([float(w) for w in dec.weights]) * np.exp(0.3 * rng.standard_normal(dec.d))
        cand = _reweight(dec, m, mode)
        if cand is None:
            continue
        gap = check_instance(psi, c, cand, mode)
        if gap < -COUNTEREXAMPLE_TOL:
            return cand, gap
        if gap < gap0:
            best[step % len(best)] = (gap, idx, cand)
    return None


# ---------------------------------------------------------------------------
# LP over a finite atom set


@dataclass
class LpDecomposition:
    lp_gap: float
    weights: np.ndarray
    witness: Decomposition | None
    unbounded: bool = False

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.weights > 1e-12))


def lp_min_decomposition(psi: GeometricIntegrand, c: float, eta0: OrientedPlane,
                         atom_set, orientation_mode: str = "any") -> LpDecomposition:
    """Minimise sum m_i G(eta_i) over sum m_i eta_i = eta0, m >= 0, G = Psi - c|.|.

    ``lp_gap`` is the optimum minus G(eta0) (<= 0 since eta0 is an atom).
    An unbounded LP means G is negative along a positive null combination;
    the returned witness then adds one unit of that ray to the current basis.
    """
    _check_mode(orientation_mode)
    atoms = list(atom_set)
    x0 = eta0.kvector.as_float().coeffs
    if not any(np.linalg.norm(p.kvector.as_float().coeffs - x0) <= 1e-12 for p in atoms):
        raise ValueError("atom_set must contain eta0")
    if orientation_mode == "positive" and any(inner(p.kvector, eta0.kvector) <= 0 for p in atoms):
        raise DecompositionError("atom not positively oriented with respect to eta0")
    a = np.stack([p.kvector.as_float().coeffs for p in atoms], axis=1)
    g = np.array([psi(p.kvector) - c * p.kvector.norm() for p in atoms])
    g0 = psi(eta0.kvector) - c * eta0.kvector.norm()
    res = simplex_min(g, a, x0)
    x = np.clip(np.asarray(res.x, dtype=float), 0.0, None)
    unbounded = res.status == "unbounded"
    if unbounded:
        ray = np.clip(np.asarray(res.ray, dtype=float), 0.0, None)
        x = x + ray / ray.sum()
    gap = float(g @ x - g0)
    witness = None
    if gap < -COUNTEREXAMPLE_TOL:
        keep = [i for i in range(len(atoms)) if x[i] > 1e-12]
        witness = Decomposition(eta0, [(float(x[i]), atoms[i]) for i in keep])
    return LpDecomposition(gap, x, witness, unbounded)


@dataclass
class UpcReport:
    mode: str  # verified_instance | counterexample | sampled_certificate
    c: float
    worst_gap: float
    witness: Decomposition | None = None
    sample_stats: dict = field(default_factory=dict)
    caveat: str = ""

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "c": self.c,
            "worst_gap": self.worst_gap,
            "inequality": "sum m_i Psi(eta_i) - Psi(eta0) >= c (sum m_i |eta_i| - |eta0|)",
            "witness": None if self.witness is None else self.witness.to_json(),
            "sample_stats": self.sample_stats,
            "caveat": self.caveat,
        }


def default_threads() -> int:
    env = os.environ.get("ANISO_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _certify_direction(psi, c, n_atoms, seed_seq, mode):
    rng = np.random.default_rng(seed_seq)
    eta0 = random_plane(psi.n, psi.k, rng)
    atoms = [eta0]
    for _ in range(n_atoms):
        p = random_plane(psi.n, psi.k, rng)
        if mode == "positive":
            s = inner(p.kvector, eta0.kvector)
            if abs(s) <= 1e-12:
                continue
            if s < 0:
                p = -p
        atoms.append(p)
    return lp_min_decomposition(psi, c, eta0, atoms, mode)


def certify_sampled(psi: GeometricIntegrand, c: float, n_dirs: int = 50, n_atoms: int = 200,
                    seed: int = 0, orientation_mode: str = "any",
                    threads: int | None = 1) -> UpcReport:
    """Sampled LP certificate for UPC(c) (any mode) or UPC+(c) (positive mode).

    Directions get independent child seeds, so the result does not depend on
    ``threads``; ties in the worst gap go to the lowest direction index.
    """
    _check_mode(orientation_mode)
    if n_dirs < 1 or n_atoms < 1:
        raise ValueError("n_dirs and n_atoms must be >= 1")
    seqs = np.random.SeedSequence(seed).spawn(n_dirs)
    threads = default_threads() if threads is None else max(1, threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(
                lambda s: _certify_direction(psi, c, n_atoms, s, orientation_mode), seqs))
    else:
        results = [_certify_direction(psi, c, n_atoms, s, orientation_mode) for s in seqs]
    gaps = [r.lp_gap for r in results]
    worst_idx = min(range(n_dirs), key=lambda i: (gaps[i], i))
    worst = results[worst_idx]
    stats = {
        "n_dirs": n_dirs, "n_atoms": n_atoms, "seed": seed,
        "orientation_mode": orientation_mode, "worst_direction": worst_idx,
        "n_negative": sum(g < -COUNTEREXAMPLE_TOL for g in gaps),
        "n_unbounded": sum(r.unbounded for r in results),
        "max_support": max(r.support for r in results),
        "mean_gap": float(np.mean(gaps)),
    }
    if worst.lp_gap < -COUNTEREXAMPLE_TOL:
        return UpcReport("counterexample", c, worst.lp_gap, worst.witness, stats)
    return UpcReport("sampled_certificate", c, worst.lp_gap, None, stats, SAMPLED_CAVEAT)


def verify_instance(psi: GeometricIntegrand, c: float, dec: Decomposition,
                    orientation_mode: str = "any") -> UpcReport:
    gap = check_instance(psi, c, dec, orientation_mode)
    mode = "counterexample" if gap < -COUNTEREXAMPLE_TOL else "verified_instance"
    return UpcReport(mode, c, gap, dec if mode == "counterexample" else None,
                     {"d": dec.d, "orientation_mode": orientation_mode})


def gap_affinity_check(psi: GeometricIntegrand, dec: Decomposition, c_list,
                       tol: float = 1e-10) -> tuple[float, float]:
    """Fit gap(c) = A - c B through check_instance values.

    The gap is affine in c, so a limit c -> c0 of non-negative gaps stays
    non-negative. A residual above ``tol`` means the gap is not computed
    consistently and raises ``RuntimeError``.
    """
    cs = np.asarray(list(c_list), dtype=float)
    if cs.size < 2:
        raise ValueError("need at least two values of c")
    gaps = np.array([check_instance(psi, float(c), dec) for c in cs])
    design = np.stack([np.ones_like(cs), -cs], axis=1)
    coef, *_ = np.linalg.lstsq(design, gaps, rcond=None)
    resid = float(np.max(np.abs(design @ coef - gaps)))
    if resid >= tol:
        raise RuntimeError(f"gap(c) is not affine: residual {resid:.3g}")
    return float(coef[0]), float(coef[1])


def bisect_upc_constant(psi: GeometricIntegrand, lo: float = 0.0, hi: float = 2.0,
                        iterations: int = 20, n_dirs: int = 20, n_atoms: int = 100,
                        seed: int = 0, orientation_mode: str = "any") -> float:
    """Heuristic largest c passing ``certify_sampled`` (a sampled upper estimate)."""
    def ok(c):
        return certify_sampled(psi, c, n_dirs, n_atoms, seed, orientation_mode).mode == "sampled_certificate"

    if not ok(lo):
        return math.nan
    if ok(hi):
        return hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo
