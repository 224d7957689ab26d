"""Geometric, classical and Q-integrands.

A geometric integrand is stored by its values on unit k-vectors and extended
positively homogeneously: Psi(xi) = |xi| * Psi(xi / |xi|), Psi(0) = 0.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exterior import KVector, random_plane, standard_plane, wedge_M


class IntegrandError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GeometricIntegrand:
    n: int
    k: int
    evaluator: Callable[[np.ndarray], float]  # acts on unit coefficient vectors
    name: str = "custom"
    is_even: bool = False
    claimed_lipschitz_bound: float | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, xi) -> float:
        return eval_geometric(self, xi)

    def to_config(self) -> dict:
        return {"name": self.name, "params": {"n": self.n, "k": self.k, **self.params}}


def _coeffs(xi, n: int, k: int) -> np.ndarray:
    if isinstance(xi, KVector):
        if (xi.n, xi.k) != (n, k):
            raise IntegrandError(f"integrand is on (n={n}, k={k}), got (n={xi.n}, k={xi.k})")
        return xi.as_float().coeffs
    c = np.asarray(xi, dtype=float)
    if c.shape != (math.comb(n, k),):
        raise IntegrandError(f"expected {math.comb(n, k)} coordinates, got {c.shape}")
    return c


def eval_geometric(psi: GeometricIntegrand, xi) -> float:
    c = _coeffs(xi, psi.n, psi.k)
    r = float(np.linalg.norm(c))
    if r == 0.0:
        return 0.0
    v = float(psi.evaluator(c / r))
    if v < 0 or not math.isfinite(v):
        raise IntegrandError(f"integrand {psi.name!r} returned {v} (must be finite and >= 0)")
    return r * v


# ---------------------------------------------------------------------------
# built-in families


def area(n: int, k: int) -> GeometricIntegrand:
    return GeometricIntegrand(n, k, lambda u: 1.0, "area", True, 1.0)


def ellipse_norm(n: int, k: int, a) -> GeometricIntegrand:
    """Psi(xi) = sqrt(xi^T A xi) for symmetric positive definite A on Lambda_k."""
    a = np.asarray(a, dtype=float)
    m = math.comb(n, k)
    if a.shape != (m, m):
        raise IntegrandError(f"A must be {m} x {m}")
    if not np.allclose(a, a.T, atol=1e-12):
        raise IntegrandError("A must be symmetric")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise IntegrandError("A must be positive definite") from None
    lip = float(np.sqrt(np.linalg.eigvalsh(a).max()))
    return GeometricIntegrand(
        n, k, lambda u: float(np.sqrt(u @ a @ u)), "ellipse_norm", True, lip,
        {"A": a.tolist()})


def perturbed_area(n: int, k: int, eps: float, eta_star=None) -> GeometricIntegrand:
    """Psi(xi) = 1 + eps * (xi . eta*)^2 on unit xi."""
    if eta_star is None:
        eta_star = standard_plane(n, k).kvector.coeffs
    es = np.asarray(eta_star, dtype=float)
    if es.shape != (math.comb(n, k),):
        raise IntegrandError("eta_star has the wrong number of coordinates")
    if 1 + min(eps, 0.0) * float(es @ es) <= 0:
        raise IntegrandError("perturbation makes the integrand non-positive")
    lip = 1.0 + 3 * abs(eps) * float(es @ es)
    return GeometricIntegrand(
        n, k, lambda u: 1.0 + eps * float(u @ es) ** 2, "perturbed_area", True, lip,
        {"eps": eps, "eta_star": es.tolist()})


def tabulated(n: int, k: int, samples: Sequence) -> GeometricIntegrand:
    """Nearest-sample lookup on the unit sphere of Lambda_k, extended homogeneously.

    ``samples`` is a sequence of (coefficients, value) pairs. Values at
    non-unit samples are rescaled homogeneously.
    """
    dirs, vals = [], []
    for coeffs, value in samples:
        c = np.asarray(coeffs, dtype=float)
        r = float(np.linalg.norm(c))
        if r == 0:
            raise IntegrandError("tabulated sample at the zero k-vector")
        if value < 0:
            raise IntegrandError("tabulated values must be non-negative")
        dirs.append(c / r)
        vals.append(float(value) / r)
    if not dirs:
        raise IntegrandError("tabulated integrand needs at least one sample")
    u_arr = np.array(dirs)
    v_arr = np.array(vals)

    def lookup(u):
        return float(v_arr[int(np.argmin(np.linalg.norm(u_arr - u, axis=1)))])

    return GeometricIntegrand(
        n, k, lookup, "tabulated", False, None,
        {"samples": [[d.tolist(), v] for d, v in zip(u_arr, v_arr)]})


BUILTINS = ("area", "ellipse_norm", "perturbed_area", "tabulated")


def builtin(name: str, params: dict | None = None) -> GeometricIntegrand:
    params = dict(params or {})
    try:
        n, k = int(params.pop("n")), int(params.pop("k"))
    except KeyError:
        raise IntegrandError("integrand params need 'n' and 'k'") from None
    if name == "area":
        return area(n, k)
    if name == "ellipse_norm":
        if "A" not in params:
            raise IntegrandError("ellipse_norm needs parameter 'A'")
        return ellipse_norm(n, k, params["A"])
    if name == "perturbed_area":
        return perturbed_area(n, k, float(params.get("eps", 0.05)), params.get("eta_star"))
    if name == "tabulated":
        return tabulated(n, k, params.get("samples", []))
    raise IntegrandError(f"unknown integrand {name!r}; choose from {BUILTINS}")


def from_config(cfg: dict) -> GeometricIntegrand:
    if not isinstance(cfg, dict) or "name" not in cfg:
        raise IntegrandError("integrand config must be an object with a 'name'")
    params = dict(cfg.get("params", {}))
    for key in ("n", "k"):
        if key in cfg:
            params.setdefault(key, cfg[key])
    return builtin(cfg["name"], params)


def load(path) -> GeometricIntegrand:
    with open(path, encoding="utf-8") as fh:
        return from_config(json.load(fh))


def check_lipschitz(psi: GeometricIntegrand, n_pairs: int = 10_000, seed: int = 0,
                    bound: float | None = None) -> tuple[float, bool]:
    """Largest sampled difference quotient of the homogeneous extension.

    Pairs are random simple k-vectors with random lengths in [0.5, 2].
    Returns (max quotient, quotient <= bound) where bound defaults to the
    integrand's claimed constant (True when no claim is made).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a = random_plane(psi.n, psi.k, rng).kvector * rng.uniform(0.5, 2.0)
        if rng.random() < 0.5:
            # nearby pairs probe the local constant
            b = a + KVector(psi.n, psi.k, 1e-3 * rng.standard_normal(a.coeffs.shape))
        else:
            b = random_plane(psi.n, psi.k, rng).kvector * rng.uniform(0.5, 2.0)
        d = (a - b).norm()
        if d > 0:
            worst = max(worst, abs(psi(a) - psi(b)) / d)
    bound = psi.claimed_lipschitz_bound if bound is None else bound
    return worst, True if bound is None else worst <= bound * (1 + 1e-9)


# ---------------------------------------------------------------------------
# classical and Q-integrands


@dataclass(frozen=True)
class ClassicalIntegrand:
    """psi(X) = Psi(wedge_M(X)) for (n-k) x k matrices X."""

    underlying: GeometricIntegrand

    @property
    def n(self) -> int:
        return self.underlying.n

    @property
    def k(self) -> int:
        return self.underlying.k

    def __call__(self, x) -> float:
        return eval_classical(self, x)


def eval_classical(psi: ClassicalIntegrand, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape != (psi.n - psi.k, psi.k):
        raise IntegrandError(f"expected a {(psi.n - psi.k, psi.k)} matrix, got {x.shape}")
    return eval_geometric(psi.underlying, wedge_M(x))


@dataclass(frozen=True)
class QIntegrand:
    """Sum of a classical integrand over the Q sheets."""

    Q: int
    base: ClassicalIntegrand

    def __post_init__(self):
        if self.Q < 1:
            raise IntegrandError("Q must be a positive integer")

    def __call__(self, xs) -> float:
        return eval_q_integrand(self, xs)


def eval_q_integrand(F: QIntegrand, xs) -> float:
    xs = list(xs)
    if len(xs) != F.Q:
        raise IntegrandError(f"expected {F.Q} gradient matrices, got {len(xs)}")
    return float(sum(eval_classical(F.base, x) for x in xs))
