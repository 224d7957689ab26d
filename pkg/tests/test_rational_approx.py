import math
from fractions import Fraction

import numpy as np
import pytest

from anisoupc import _exact
from anisoupc.exterior import (KVector, OrientedPlane, inner, is_simple, random_plane,
                               standard_plane, wedge_cols)
from anisoupc.polyconvexity import Decomposition, random_decomposition
from anisoupc.rational_approx import (ApproximationError, approximate_decomposition,
                                      caratheodory_reduce, rational_simple_approx)

S2 = 1 / math.sqrt(2)


def plane(*coeffs):
    return OrientedPlane.from_kvector(KVector(len(coeffs), 1, np.array(coeffs, dtype=float)))


def exact_dist_sq(kv, target):
    diff = kv - KVector(kv.n, kv.k, _exact.fraction_array(target.coeffs))
    return diff.norm_sq()


def test_rational_plane_returned_unchanged():
    r = rational_simple_approx(standard_plane(4, 2), 1e-6)
    assert r.denominator == 1
    assert r.kvector.equals(KVector.basis_vector(4, (0, 1), exact=True))


def test_irrational_line():
    eta = plane(1, math.sqrt(2))
    r = rational_simple_approx(eta, 1e-3)
    assert r.kvector.norm_sq() == 1
    assert np.linalg.norm(r.unit.coeffs - eta.kvector.coeffs) < 1e-3


def test_large_eps_diameter_bound():
    # |u - eta| < 2 for unit u holds exactly when u is not -eta
    eta = random_plane(3, 2, np.random.default_rng(0))
    r = rational_simple_approx(eta, 2.0)
    assert r.denominator == 1
    assert exact_dist_sq(r.kvector, eta.kvector) < 4


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2), (5, 3), (6, 3)])
def test_rational_approx_postconditions(n, k):
    rng = np.random.default_rng(n * k)
    for eps in (1e-1, 1e-3, 1e-6):
        eta = random_plane(n, k, rng)
        r = rational_simple_approx(eta, eps)
        assert r.kvector.norm_sq() == 1  # exactly unit
        assert exact_dist_sq(r.kvector, eta.kvector) < Fraction(eps) ** 2
        assert wedge_cols(r.frame).equals(r.kvector)
        assert is_simple(r.kvector)
        gram = r.frame.T @ r.frame
        assert all(gram[i, j] == (1 if i == j else 0) for i in range(k) for j in range(k))


def test_rational_approx_rejects_bad_eps():
    with pytest.raises(ValueError):
        rational_simple_approx(standard_plane(3, 1), 0.0)


# --- Caratheodory ---------------------------------------------------------------------

def test_caratheodory_single_atom_unchanged():
    atoms, w = caratheodory_reduce(np.array([2.0, 0.0]), [np.array([1.0, 0.0])], [2.0])
    assert len(atoms) == 1 and w == [2.0]


def test_caratheodory_three_atoms_in_plane():
    x = [np.array([1.0, 0.0]), np.array([S2, S2]), np.array([S2, -S2])]
    w = [0.5, 1 / (2 * math.sqrt(2)), 1 / (2 * math.sqrt(2))]
    atoms, lam = caratheodory_reduce(np.array([1.0, 0.0]), x, w)
    assert len(atoms) <= 2 and all(v > 0 for v in lam)
    assert np.allclose(sum(l * a for l, a in zip(lam, atoms)), [1.0, 0.0], atol=1e-10)


def test_caratheodory_independent_unchanged():
    x = [np.eye(3)[:, i] for i in range(3)]
    atoms, lam = caratheodory_reduce(np.array([1.0, 2.0, 3.0]), x, [1.0, 2.0, 3.0])
    assert len(atoms) == 3 and np.allclose(lam, [1, 2, 3])


def test_caratheodory_exact_random():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m, count = int(rng.integers(2, 5)), int(rng.integers(3, 10))
        x = [_exact.fraction_array(rng.integers(-4, 5, m)) for _ in range(count)]
        w = [Fraction(int(rng.integers(1, 9)), int(rng.integers(1, 9))) for _ in range(count)]
        target = sum((wi * xi for wi, xi in zip(w, x)), _exact.zeros(m))
        atoms, lam = caratheodory_reduce(target, x, w)
        assert len(atoms) <= min(m, count)
        assert all(v > 0 for v in lam)
        back = sum((l * a for l, a in zip(lam, atoms)), _exact.zeros(m))
        assert all(b == t for b, t in zip(back, target))


def test_caratheodory_inconsistent_raises():
    with pytest.raises(ValueError):
        caratheodory_reduce(np.array([1.0, 1.0]), [np.array([1.0, 0.0])], [1.0])
    with pytest.raises(ValueError):
        caratheodory_reduce(_exact.fraction_array([1, 1]), [_exact.fraction_array([1, 0])], [Fraction(1)])


# --- approximate decompositions ---------------------------------------------------------

def _check_rd(rd, dec, eps):
    eps_q = Fraction(eps)
    assert rd.identity_holds()
    assert 0 <= rd.N - dec.d <= math.comb(dec.n, dec.k)
    assert exact_dist_sq(rd.eta0_tilde.kvector, dec.eta0.kvector) < (eps_q / 2) ** 2
    for (m, a), p in zip(rd.atoms[:dec.d], dec.planes):
        assert exact_dist_sq(a.kvector, p.kvector) < (eps_q / (2 * dec.d * m)) ** 2
    for m, a in rd.atoms:
        assert inner(a.kvector, rd.eta0_tilde.kvector) > 0
    assert all(m >= 0 for m, _ in rd.atoms[dec.d:])
    assert rd.all_bounds_hold()


def test_sqrt2_decomposition():
    dec = Decomposition(plane(1, 0), [(S2, plane(S2, S2)), (S2, plane(S2, -S2))])
    rd = approximate_decomposition(dec, 1e-2)
    _check_rd(rd, dec, 1e-2)
    assert rd.N - rd.d_original <= 2


def test_rational_input_keeps_atoms():
    e1 = plane(1, 0, 0)
    dec = Decomposition(e1, [(0.5, e1), (0.5, e1)])
    rd = approximate_decomposition(dec, 1e-2)
    _check_rd(rd, dec, 1e-2)
    for _, a in rd.atoms[:2]:
        assert a.kvector.equals(KVector.basis_vector(3, (0,), exact=True))


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (3, 2), (4, 2), (5, 2), (5, 3)])
def test_random_positive_decompositions(n, k):
    rng = np.random.default_rng(n + 10 * k)
    for eps in (1e-1, 1e-2, 1e-4):
        dec = random_decomposition(n, k, int(rng.integers(2, 5)), rng, "positive")
        _check_rd(approximate_decomposition(dec, eps), dec, eps)


def test_requires_positive_orientation():
    dec = Decomposition(plane(1, 0), [(2.0, plane(1, 0)), (1.0, plane(-1, 0))])
    with pytest.raises(ApproximationError):
        approximate_decomposition(dec, 1e-2)


def test_json_uses_rational_strings():
    dec = Decomposition(plane(1, 0), [(S2, plane(S2, S2)), (S2, plane(S2, -S2))])
    obj = approximate_decomposition(dec, 1e-2).to_json()
    assert obj["identity_exact"] is True
    assert "/" in obj["scale"]
    assert all(isinstance(x, str) for x in obj["eta0_tilde"]["kvector"]["coeffs"])
    assert set(obj["bounds"]) >= {"eta0_close", "atoms_close", "extra_atoms", "positive_orientation"}
