import itertools
import json
import math

import numpy as np
import pytest

from anisoupc.currents import boundary, energy, mass, tangent
from anisoupc.exterior import KVector, inner, wedge_M
from anisoupc.integrands import ClassicalIntegrand, QIntegrand, area, ellipse_norm
from anisoupc.qvalued import (AffineMultigraph, PiecewiseAffineQ, QPoint, QValuedError,
                              area_formula_mass, cell_volume, check_continuity, continuity_defect,
                              differential_q, eval_h, eval_q, graph_current, kuhn_grid,
                              load_q_function, locate, make_graph_test_pair, metric_G,
                              multisets_equal, q_energy, q_energy_via_graph, random_affine_multigraph,
                              random_q_function, tent_function, verify_uqc, zero_multigraph)


def brute_G(p, s):
    best = min(sum(float(np.sum((p[i] - s[j]) ** 2)) for i, j in enumerate(perm))
               for perm in itertools.permutations(range(len(p))))
    return math.sqrt(best)


def q_area(k, m, Q):
    return QIntegrand(Q, ClassicalIntegrand(area(k + m, k)))


def constant_sheets(k, m, values, level=1):
    h = AffineMultigraph(tuple((1, np.atleast_1d(v), np.zeros((m, k))) for v in values))
    return h.to_piecewise(level)


# --- metric_G ----------------------------------------------------------------------------

def test_metric_examples():
    a = QPoint(np.array([0.0, 2.0]))
    assert metric_G(a, a) == 0.0
    assert metric_G(a, QPoint(np.array([1.0, 3.0]))) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert metric_G(a, QPoint(np.array([3.0, 1.0]))) == pytest.approx(math.sqrt(2), abs=1e-15)
    with pytest.raises(QValuedError):
        metric_G(a, QPoint(np.array([0.0, 1.0, 2.0])))


@pytest.mark.parametrize("Q", range(1, 7))
def test_metric_matches_enumeration(Q):
    rng = np.random.default_rng(Q)
    for _ in range(50):
        m = int(rng.integers(1, 4))
        p, s = rng.standard_normal((Q, m)), rng.standard_normal((Q, m))
        assert metric_G(QPoint(p), QPoint(s)) == pytest.approx(brute_G(p, s), abs=1e-12)


def test_metric_axioms():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        Q, m = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        a, b, c = (QPoint(rng.standard_normal((Q, m))) for _ in range(3))
        assert metric_G(a, b) == metric_G(b, a)
        assert metric_G(a, c) <= metric_G(a, b) + metric_G(b, c) + 1e-12
    p = rng.standard_normal((4, 2))
    shuffled = QPoint(p[[2, 0, 3, 1]])
    assert multisets_equal(QPoint(p), shuffled) and metric_G(QPoint(p), shuffled) == 0.0


# --- evaluation --------------------------------------------------------------------------

def test_kuhn_grid_counts_and_locate():
    for k, level in [(1, 3), (2, 2), (3, 2)]:
        cells = kuhn_grid(k, level)
        assert len(cells) == math.factorial(k) * level ** k
        rng = np.random.default_rng(k)
        for _ in range(50):
            x = rng.uniform(0, 1, k)
            verts = np.array(cells[locate(k, level, x)], dtype=float) / level
            # barycentric coordinates of x are nonnegative
            lam = np.linalg.solve(np.vstack([verts.T, np.ones(k + 1)]), np.append(x, 1.0))
            assert np.all(lam >= -1e-12)
    assert cell_volume(2, 2) == 1 / 8
    with pytest.raises(QValuedError):
        locate(2, 2, [0.5, 1.5])


def test_eval_constant_and_single_sheet():
    f = constant_sheets(2, 1, [0.0, 1.0], level=2)
    for x in ([0.1, 0.2], [0.9, 0.5], [0.5, 0.5]):
        assert multisets_equal(eval_q(f, x), QPoint(np.array([[0.0], [1.0]])))
    lmat = np.array([[2.0, -1.0]])
    g = AffineMultigraph(((1, [0.5], lmat),)).to_piecewise(2)
    x = np.array([0.3, 0.8])
    assert eval_q(g, x).points[0, 0] == pytest.approx(0.5 + lmat @ x)


def test_eval_face_points_agree_between_neighbours():
    f = random_q_function(2, 2, 2, 2, 1.0, random_affine_multigraph(2, 2, 2, seed=1), seed=2)
    for c, verts in enumerate(kuhn_grid(2, 2)):
        pts = np.array(verts, dtype=float) / 2
        mid = (pts[0] + pts[1]) / 2
        j = locate(2, 2, mid)
        assert metric_G(QPoint(f.sheet_values(c, mid)), QPoint(f.sheet_values(j, mid))) < 1e-10
    assert continuity_defect(f)[0] < 1e-10


def test_continuity_violation_detected():
    f = constant_sheets(1, 1, [0.0], level=2)
    a = np.array(f.a)
    a[0, 0, 0] = 1.0
    bad = PiecewiseAffineQ(1, 1, 1, 2, a, np.array(f.lin))
    with pytest.raises(QValuedError):
        check_continuity(bad)
    with pytest.raises(QValuedError):
        graph_current(bad)


def test_differential_examples():
    lmat = np.array([[1.0, 2.0], [0.0, -1.0]])
    h = AffineMultigraph(((2, [0.0, 0.0], lmat), (1, [5.0, 5.0], np.zeros((2, 2)))))
    d = differential_q(h.to_piecewise(1), 0)
    assert sum(np.array_equal(x, lmat) for x in d) == 2
    assert sum(np.array_equal(x, np.zeros((2, 2))) for x in d) == 1


# --- graph currents and masses -----------------------------------------------------------

def test_graph_current_examples():
    g = graph_current(constant_sheets(1, 1, [0.0]))
    assert len(g) == 1 and np.array_equal(g.cells[0][0].vertices, [[0, 0], [1, 0]])
    two = graph_current(constant_sheets(1, 1, [0.0, 1.0]))
    assert mass(two) == pytest.approx(2.0)


def test_graph_current_orientation_and_boundary():
    e = KVector.basis_vector(5, (0, 1))
    f = random_q_function(2, 3, 2, 2, 2.0, random_affine_multigraph(2, 3, 2, seed=3), seed=4)
    g = graph_current(f)
    assert all(m == 1 for _, m in g.cells)
    assert all(inner(tangent(c).kvector, e) > 0 for c, _ in g.cells)
    assert boundary(boundary(g)).is_empty()


def test_area_formula_examples():
    assert area_formula_mass(constant_sheets(2, 1, [0.0])) == pytest.approx(1.0)
    slope = AffineMultigraph(((1, [0.0], [[1.0]]),)).to_piecewise(1)
    assert area_formula_mass(slope) == pytest.approx(math.sqrt(2))
    t = 0.7
    assert area_formula_mass(tent_function(t)) == pytest.approx(2 * math.sqrt(0.25 + t * t))


@pytest.mark.parametrize("k,m,Q", [(1, 1, 1), (1, 2, 2), (2, 1, 3), (2, 2, 2), (3, 1, 2), (3, 2, 1)])
def test_mass_and_energy_identities(k, m, Q):
    rng = np.random.default_rng(k * 100 + m * 10 + Q)
    psi = ellipse_norm(k + m, k, np.diag(rng.uniform(0.5, 2.0, math.comb(k + m, k))))
    F = QIntegrand(Q, ClassicalIntegrand(psi))
    for level in (1, 2):
        h = random_affine_multigraph(k, m, Q, seed=rng)
        f = random_q_function(k, m, Q, level, 1.5, h, seed=rng)
        g = graph_current(f)
        assert mass(g) == pytest.approx(area_formula_mass(f), rel=1e-9)
        assert q_energy(F, f) == pytest.approx(energy(psi, g), rel=1e-9)
        assert q_energy_via_graph(F, f) == pytest.approx(q_energy(F, f), rel=1e-9)


def test_q_energy_examples():
    f = random_q_function(2, 1, 2, 2, 1.0, random_affine_multigraph(2, 1, 2, seed=5), seed=6)
    assert q_energy(q_area(2, 1, 2), f) == pytest.approx(area_formula_mass(f), rel=1e-12)
    x = np.array([[0.4, -0.3], [1.0, 0.2]])
    psi = ellipse_norm(4, 2, np.diag([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
    single = AffineMultigraph(((1, [0.0, 0.0], x),)).to_piecewise(1)
    assert q_energy(QIntegrand(1, ClassicalIntegrand(psi)), single) == pytest.approx(psi(wedge_M(x)))
    with pytest.raises(QValuedError):
        q_energy(q_area(2, 1, 3), f)


# --- test pairs and UQC -----------------------------------------------------------------

def test_tent_pair():
    for t in (0.3, 1.0):
        pair = make_graph_test_pair(tent_function(t), zero_multigraph())
        assert pair.boundary_defect == 0.0
        assert verify_uqc(q_area(1, 1, 1), 1.0, pair) == pytest.approx(0.0, abs=1e-14)
    m_f = math.sqrt(5)
    assert verify_uqc(q_area(1, 1, 1), 0.5, pair) == pytest.approx(0.5 * (m_f - 1), abs=1e-14)


def test_f_equal_h_gives_zero_gap():
    h = random_affine_multigraph(2, 2, 3, seed=7)
    pair = make_graph_test_pair(h.to_piecewise(2), h, strict=True)
    psi = ellipse_norm(4, 2, np.diag([1.0, 2.0, 1.0, 3.0, 1.0, 2.0]))
    assert verify_uqc(QIntegrand(3, ClassicalIntegrand(psi)), 0.4, pair) == pytest.approx(0.0, abs=1e-12)


def test_boundary_mismatch_detected():
    f = tent_function(0.5)
    values = np.array([0.0, 0.5, 0.2]).reshape(3, 1, 1)
    bad = PiecewiseAffineQ.from_vertex_values(1, 1, 1, 2, values)
    with pytest.raises(QValuedError, match="x = \\[1.0\\]"):
        make_graph_test_pair(bad, zero_multigraph())
    with pytest.raises(QValuedError):
        make_graph_test_pair(f, AffineMultigraph(((1, [0.0], [[0.0], [0.0]]),)))


def test_strict_mode_rejects_crossed_sheets():
    # sheets A = 0 and B = x1 + x2 + x3 - 1.5 on the cube; f swaps the labels at (1,1,1) only.
    # On each boundary triangle through (1,1,1), B vanishes at the midpoint of the other
    # two vertices, so the multisets agree at every vertex and barycentre.
    h = AffineMultigraph(((1, [0.0], np.zeros((1, 3))), (1, [-1.5], np.ones((1, 3)))))
    values = np.empty((2, 2, 2, 2, 1))
    for g in itertools.product(range(2), repeat=3):
        b = sum(g) - 1.5
        values[g] = [[b], [0.0]] if g == (1, 1, 1) else [[0.0], [b]]
    f = PiecewiseAffineQ.from_vertex_values(3, 1, 2, 1, values)
    pair = make_graph_test_pair(f, h, check_chains=False)
    assert pair.boundary_defect < 1e-12
    with pytest.raises(QValuedError):
        make_graph_test_pair(f, h, strict=True, check_chains=False)
    with pytest.raises(QValuedError, match="graph boundaries differ"):
        make_graph_test_pair(f, h)


def test_random_q_function_properties():
    h = random_affine_multigraph(2, 2, 3, seed=8)
    f0 = random_q_function(2, 2, 3, 2, 0.0, h, seed=9)
    assert np.array_equal(f0.a, h.to_piecewise(2).a) and np.array_equal(f0.lin, h.to_piecewise(2).lin)
    # level 1 has no interior vertex, so the pinned sampler returns h itself
    f1 = random_q_function(2, 2, 3, 1, 1.0, h, seed=9)
    assert np.array_equal(f1.lin, h.to_piecewise(1).lin)
    F = QIntegrand(3, ClassicalIntegrand(area(4, 2)))
    assert verify_uqc(F, 0.5, make_graph_test_pair(f1, h)) == 0.0
    rng = np.random.default_rng(10)
    for _ in range(20):
        k, m, Q = (int(rng.integers(1, 4)) for _ in range(3))
        hh = random_affine_multigraph(k, m, Q, seed=rng)
        f = random_q_function(k, m, Q, int(rng.integers(1, 3)), 1.0, hh, seed=rng)
        make_graph_test_pair(f, hh)
    line = random_q_function(1, 1, 1, 4, 1.0, zero_multigraph(), seed=11)
    assert eval_q(line, [0.0]).points[0, 0] == 0.0 and eval_q(line, [1.0]).points[0, 0] == 0.0


def test_uqc_area_gaps_signs():
    F = {Q: q_area(2, 1, Q) for Q in (1, 2)}
    rng = np.random.default_rng(12)
    for _ in range(30):
        Q = int(rng.integers(1, 3))
        h = random_affine_multigraph(2, 1, Q, seed=rng)
        pair = make_graph_test_pair(random_q_function(2, 1, Q, 2, 1.0, h, seed=rng), h)
        assert verify_uqc(F[Q], 1.0, pair) >= -1e-9
        assert verify_uqc(F[Q], 0.5, pair) >= 0


def test_json_round_trip(tmp_path):
    f = random_q_function(2, 1, 2, 2, 1.0, random_affine_multigraph(2, 1, 2, seed=13), seed=14)
    path = tmp_path / "f.json"
    path.write_text(json.dumps(f.to_json()))
    g = load_q_function(path)
    assert np.array_equal(g.a, f.a) and np.array_equal(g.lin, f.lin)
    h = random_affine_multigraph(2, 1, 2, seed=15)
    again = AffineMultigraph.from_json(h.to_json())
    assert multisets_equal(eval_h(again, [0.2, 0.3]), eval_h(h, [0.2, 0.3]))
    with pytest.raises(QValuedError):
        AffineMultigraph(((1, [0.0], [[1.0]]), (1, [0.0], [[2.0]])))
