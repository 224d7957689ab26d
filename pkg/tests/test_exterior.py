import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisoupc import _exact
from anisoupc.exterior import (KVector, OrientedPlane, associated_space, basis, factor_simple,
                               hodge_star, inner, is_simple, multi_index_rank,
                               multi_index_unrank, random_plane, standard_plane, wedge,
                               wedge_cols, wedge_M, xi_from_hom)


def e(n, *idx, exact=False):
    """Basis k-vector from 1-based indices."""
    return KVector.basis_vector(n, tuple(i - 1 for i in idx), exact)


def perm_sign(seq):
    seq = list(seq)
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inv % 2 else 1


def minors_oracle(w):
    """Coefficients of the wedge of the columns: k x k minors by np.linalg.det."""
    n, k = w.shape
    return np.array([np.linalg.det(w[list(rows), :]) for rows in itertools.combinations(range(n), k)])


def hodge_oracle(z):
    """*e_J = sign(J, J^c) e_{J^c}, with sign from brute-force inversion counting."""
    n, j = z.n, z.k
    out = np.zeros(math.comb(n, n - j), dtype=object if z.exact else float)
    if z.exact:
        out[:] = Fraction(0)
    for r, idx in enumerate(itertools.combinations(range(n), j)):
        comp = tuple(i for i in range(n) if i not in idx)
        out[multi_index_rank(comp, n)] += perm_sign(idx + comp) * z.coeffs[r]
    return KVector(n, n - j, out)


def random_kvector(rng, n, k, exact=False):
    c = rng.standard_normal(math.comb(n, k))
    if exact:
        return KVector(n, k, np.array([Fraction(int(round(x * 8)), 7) for x in c], dtype=object))
    return KVector(n, k, c)


ALL_NK = [(n, k) for n in range(1, 7) for k in range(0, n + 1)]


# --- basis bookkeeping -----------------------------------------------------

@pytest.mark.parametrize("n,k", ALL_NK)
def test_rank_unrank_bijection(n, k):
    for r, idx in enumerate(basis(n, k)):
        assert multi_index_rank(idx, n) == r
        assert multi_index_unrank(r, n, k) == idx
    assert list(basis(n, k)) == list(itertools.combinations(range(n), k))


# --- wedge -------------------------------------------------------------------

def test_wedge_basis_case():
    v = wedge(e(3, 1), e(3, 2))
    assert v.equals(e(3, 1, 2).as_float()) or np.array_equal(v.coeffs, e(3, 1, 2).coeffs)
    assert v.coeffs.tolist() == [1.0, 0.0, 0.0]


def test_wedge_anticommutes_on_sum():
    a = e(3, 1) + e(3, 2)
    assert np.allclose(wedge(a, e(3, 1)).coeffs, (-e(3, 1, 2)).coeffs)


def test_wedge_errors():
    with pytest.raises(ValueError):
        wedge(e(3, 1, 2), e(3, 1, 3))
    with pytest.raises(ValueError):
        wedge(e(3, 1), e(4, 1))
    with pytest.raises(ValueError):
        wedge(e(3, 1, exact=True), e(3, 2))


def test_triple_wedge_matches_minors_r5():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.standard_normal((5, 3))
        a, b, c = (KVector.from_vector(w[:, i]) for i in range(3))
        left = wedge(wedge(a, b), c)
        right = wedge(a, wedge(b, c))
        ref = minors_oracle(w)
        assert np.allclose(left.coeffs, ref, rtol=1e-10, atol=1e-12)
        assert np.allclose(right.coeffs, ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("n", range(2, 7))
def test_graded_anticommutativity_and_associativity(n):
    rng = np.random.default_rng(n)
    for j, l in itertools.product(range(n + 1), repeat=2):
        if j + l > n:
            continue
        a, b = random_kvector(rng, n, j), random_kvector(rng, n, l)
        assert np.allclose(wedge(a, b).coeffs, ((-1) ** (j * l)) * wedge(b, a).coeffs, atol=1e-12)
        for m in range(n - j - l + 1):
            c = random_kvector(rng, n, m)
            lhs, rhs = wedge(wedge(a, b), c), wedge(a, wedge(b, c))
            assert np.allclose(lhs.coeffs, rhs.coeffs, rtol=1e-10, atol=1e-10)


def test_wedge_exact_mode_anticommutes():
    rng = np.random.default_rng(3)
    a, b = random_kvector(rng, 5, 2, True), random_kvector(rng, 5, 1, True)
    assert wedge(a, b).equals(wedge(b, a))  # (-1)^(2*1) = +1
    c = random_kvector(rng, 5, 1, True)
    assert wedge(b, c).equals(-wedge(c, b))


# --- Hodge star --------------------------------------------------------------

def test_hodge_standard_cases():
    assert np.allclose(hodge_star(e(3, 1, 2)).coeffs, e(3, 3).coeffs)
    e31 = -e(3, 1, 3)  # e3 ^ e1
    assert np.allclose(hodge_star(e31).coeffs, e(3, 2).coeffs)


@pytest.mark.parametrize("n,k", ALL_NK)
def test_hodge_matches_oracle_and_double_star_sign_exact(n, k):
    rng = np.random.default_rng(10 * n + k)
    z = random_kvector(rng, n, n - k, exact=True)
    star = hodge_star(z)
    assert star.equals(hodge_oracle(z))
    assert hodge_star(star).equals(z * ((-1) ** (k * (n - k))))


@pytest.mark.parametrize("n,k", [(3, 1), (4, 2), (5, 2), (5, 3), (6, 3)])
def test_hodge_duality_identity(n, k):
    rng = np.random.default_rng(n + k)
    z = random_kvector(rng, n, n - k)
    star = hodge_star(z)
    for idx in basis(n, k):
        xi = KVector.basis_vector(n, idx)
        top = wedge(z, xi).coeffs[0]
        assert inner(xi, star) == pytest.approx(top, abs=1e-12)


def test_hodge_double_star_r5_grade2():
    z = random_kvector(np.random.default_rng(5), 5, 2)
    assert np.allclose(hodge_star(hodge_star(z)).coeffs, z.coeffs, atol=1e-14)


# --- inner product -------------------------------------------------------------

def test_inner_basis():
    assert inner(e(3, 1, 2), e(3, 1, 2)) == 1
    assert inner(e(3, 1, 2), e(3, 1, 3)) == 0


def test_inner_of_minors_map_with_top_basis_is_one_symbolically():
    x = np.array([[Fraction(2, 3), Fraction(-5, 7)], [Fraction(1, 11), Fraction(4)]], dtype=object)
    assert inner(wedge_M(x), e(4, 1, 2, exact=True)) == 1
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert inner(wedge_M(rng.standard_normal((2, 2))), e(4, 1, 2)) == pytest.approx(1.0, abs=1e-14)


# --- associated space and simplicity -------------------------------------------

def test_associated_space_cases():
    b = associated_space(e(4, 1, 2))
    assert b.shape == (4, 2)
    assert np.allclose(b[2:], 0)
    assert associated_space(e(4, 1, 2) + e(4, 3, 4)).shape[1] == 0
    b = associated_space(e(4, 1, 2) + e(4, 1, 3))
    assert b.shape[1] == 2
    # row-reduction oracle: span{e1, e2 + e3}
    ref = np.array([[1, 0], [0, 1], [0, 1], [0, 0]], dtype=float)
    proj = b @ b.T
    assert np.allclose(proj @ ref, ref, atol=1e-12)


def test_associated_space_exact_and_zero():
    b = associated_space(e(4, 1, 2, exact=True) + e(4, 1, 3, exact=True))
    assert b.shape == (4, 2) and b.dtype == object
    with pytest.raises(ValueError):
        associated_space(KVector.zero(4, 2))


def test_simplicity_canonical_cases():
    assert not is_simple(e(4, 1, 2) + e(4, 3, 4))
    assert is_simple(e(4, 1, 2) + e(4, 1, 3))
    assert is_simple(e(4, 1, 2, exact=True) + e(4, 1, 3, exact=True))
    assert not is_simple(e(4, 1, 2, exact=True) + e(4, 3, 4, exact=True))


@pytest.mark.parametrize("n,k", [(n, k) for n in range(2, 7) for k in range(1, n + 1)])
def test_simplicity_on_random_wedges_and_split_sums(n, k):
    rng = np.random.default_rng(100 * n + k)
    for _ in range(5):
        w = rng.standard_normal((n, k))
        assert is_simple(wedge_cols(w))
    if k in (1, n - 1, n):
        assert is_simple(random_kvector(rng, n, k))
    if 2 <= k and 2 * k <= n:
        split = KVector.basis_vector(n, tuple(range(k))) + KVector.basis_vector(n, tuple(range(k, 2 * k)))
        assert not is_simple(split)


# --- factor_simple --------------------------------------------------------------

def test_factor_scaled_basis():
    w = factor_simple(e(3, 1, 2) * 2.0)
    assert np.allclose(wedge_cols(w).coeffs, (e(3, 1, 2) * 2.0).coeffs)
    assert abs(w[:, 0] @ w[:, 1]) < 1e-12


def test_factor_non_simple_raises():
    with pytest.raises(ValueError):
        factor_simple(e(4, 1, 2) + e(4, 3, 4))


@pytest.mark.parametrize("n,k", [(n, k) for n in range(2, 7) for k in range(1, n + 1)])
def test_factor_rewedge_round_trip(n, k):
    rng = np.random.default_rng(7 * n + k)
    for _ in range(5):
        xi = wedge_cols(rng.standard_normal((n, k)))
        w = factor_simple(xi)
        err = np.linalg.norm(wedge_cols(w).coeffs - xi.coeffs) / xi.norm()
        assert err < 1e-10
        gram = w.T @ w
        assert np.allclose(gram - np.diag(np.diag(gram)), 0, atol=1e-10 * np.abs(gram).max())


def test_factor_minors_map_and_sum_example():
    xi = e(3, 1, 2) + e(3, 1, 3)
    assert np.linalg.norm(wedge_cols(factor_simple(xi)).coeffs - xi.coeffs) < 1e-10
    x = np.random.default_rng(1).standard_normal((3, 2))
    xi = wedge_M(x)
    assert np.linalg.norm(wedge_cols(factor_simple(xi)).coeffs - xi.coeffs) < 1e-10 * xi.norm()


def test_factor_exact():
    xi = e(4, 1, 2, exact=True) * Fraction(3) + e(4, 1, 3, exact=True)
    w = factor_simple(xi)
    assert wedge_cols(w).equals(xi)


# --- wedge_cols / minors map ---------------------------------------------------------

def test_wedge_cols_identity_and_grade_one():
    assert np.array_equal(wedge_cols(np.eye(4)[:, :2]).coeffs, e(4, 1, 2).coeffs)
    x = 0.37
    assert np.allclose(wedge_cols(np.array([[1.0], [x]])).coeffs, [1.0, x])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_wedge_cols_matches_brute_force_minors(seed):
    w = np.random.default_rng(seed).standard_normal((4, 2))
    assert np.allclose(wedge_cols(w).coeffs, minors_oracle(w), atol=1e-12)


def test_wedge_M_examples():
    assert np.array_equal(wedge_M(np.zeros((2, 2))).coeffs, e(4, 1, 2).coeffs)
    assert np.allclose(wedge_M(np.array([[3.0]])).coeffs, [1.0, 3.0])
    a, b = Fraction(2, 5), Fraction(-7, 3)
    got = wedge_M(np.array([[a, b]], dtype=object))
    # e1^e2 + b e1^e3 - a e2^e3
    assert got.coeffs.tolist() == [1, b, -a]


def test_exact_orthonormal_rational_frame_has_unit_wedge():
    # (3/5, 4/5), (-4/5, 3/5) plus e3: exactly orthonormal
    w = _exact.fraction_array([[Fraction(3, 5), Fraction(-4, 5)], [Fraction(4, 5), Fraction(3, 5)], [0, 0]])
    assert wedge_cols(w).norm_sq() == 1


# --- homomorphism kernels --------------------------------------------------------------

def test_xi_from_hom_examples():
    xi, deg = xi_from_hom(np.array([[0.0, 0.0, 1.0]]))
    assert not deg and np.allclose(xi.coeffs, e(3, 1, 2).coeffs)
    f = np.array([[1, 2, -1, 3], [0, 1, 4, -2]], dtype=object)
    xi, deg = xi_from_hom(_exact.fraction_array(f))
    assert not deg and all(c.denominator == 1 for c in xi.coeffs)
    xi, deg = xi_from_hom(np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]]))
    assert deg and xi.norm() < 1e-12


@pytest.mark.parametrize("n,k", [(3, 1), (3, 2), (4, 2), (5, 2), (5, 3), (6, 3)])
def test_xi_from_hom_kernel_equals_associated_space(n, k):
    rng = np.random.default_rng(n * k)
    f = rng.standard_normal((n - k, n))
    xi, deg = xi_from_hom(f)
    assert not deg
    b = associated_space(xi)
    assert b.shape[1] == k
    assert np.allclose(f @ b, 0, atol=1e-10)


# --- oriented planes and JSON ------------------------------------------------------------

def test_oriented_plane_validation_and_json():
    rng = np.random.default_rng(2)
    p = random_plane(5, 2, rng)
    p.validate()
    q = OrientedPlane.from_json(p.to_json())
    q.validate()
    assert np.allclose(q.kvector.coeffs, p.kvector.coeffs)
    assert np.allclose((-p).kvector.coeffs, -p.kvector.coeffs)
    standard_plane(4, 2).validate()


def test_kvector_json_round_trip_exact():
    v = KVector(3, 1, _exact.fraction_array([Fraction(1, 3), Fraction(-2, 7), 0]))
    obj = v.to_json()
    assert obj["coeffs"][0] == "1/3"
    assert KVector.from_json(obj).equals(v)
