import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ricci_lab.comparison import (
    MU_DEFAULT,
    check_toponogov,
    comparison_angle,
    estimate_rac,
    euclidean_comparison_angles,
    measure_triangle,
    sample_triangles,
)
from ricci_lab.errors import InvalidInput, PerimeterTooLarge, TriangleInequalityViolation
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import Euclidean, FlatTorus, Hyperbolic, Sphere

S2 = Sphere(2, 1.0)


def to_chart(v):
    v = np.asarray(v, float) / np.linalg.norm(v)
    return np.array([math.acos(v[2]), math.atan2(v[1], v[0])])


def test_comparison_angle_examples():
    assert comparison_angle(0, 3, 4, 5) == pytest.approx(math.pi / 2, abs=1e-15)
    assert comparison_angle(0, 1, 1, 1) == pytest.approx(math.pi / 3, abs=1e-15)
    assert comparison_angle(0, 1, 1, 2) == pytest.approx(math.pi, abs=1e-15)


def test_comparison_angle_errors():
    with pytest.raises(TriangleInequalityViolation):
        comparison_angle(0, 1, 1, 3)
    with pytest.raises(PerimeterTooLarge):
        comparison_angle(1, 3, 3, 1)
    with pytest.raises(InvalidInput):
        comparison_angle(0, 0, 1, 1)


def test_model_space_law_of_cosines_consistency():
    # equilateral spherical triangle with side pi/2 has right angles
    assert comparison_angle(1.0, math.pi / 2, math.pi / 2, math.pi / 2) == pytest.approx(math.pi / 2, abs=1e-12)
    # scaling: curvature H with sides l equals curvature H c^2 with sides l / c
    assert comparison_angle(-1.0, 1.0, 2.0, 2.5) == pytest.approx(comparison_angle(-4.0, 0.5, 1.0, 1.25), abs=1e-12)


@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.0, 1.0))
def test_euclidean_angles_sum_to_pi(a, b, s):
    c = abs(a - b) + s * (a + b - abs(a - b))
    assume(1e-3 < c < a + b - 1e-3 and c > abs(a - b) + 1e-3)
    assert euclidean_comparison_angles([a, b, c]).sum() == pytest.approx(math.pi, abs=1e-9)


def test_planar_right_triangle():
    t = measure_triangle(Euclidean(2), [0, 0], [1, 0], [0, 1])
    assert np.allclose(t.lengths, [math.sqrt(2), 1, 1], atol=1e-6)
    assert np.allclose(t.angles, [math.pi / 2, math.pi / 4, math.pi / 4], atol=1e-6)
    rep = check_toponogov(t, MU_DEFAULT)
    assert rep.passed and np.allclose(rep.ratios, 1, atol=1e-6)


def test_sphere_octant_triangle():
    R = np.linalg.qr(np.array([[1.0, 0.2, 0.3], [0.1, 1.0, -0.4], [0.3, 0.5, 1.0]]))[0]
    verts = [to_chart(R[:, i]) for i in range(3)]
    t = measure_triangle(S2, *verts)
    assert np.allclose(t.lengths, math.pi / 2, atol=1e-6)
    assert np.allclose(t.angles, math.pi / 2, atol=1e-5)
    assert t.closure_error < 1e-6
    assert all(s.is_minimal for s in t.sides)
    assert check_toponogov(t).passed


def test_torus_small_triangle_is_euclidean():
    T = FlatTorus(DeckLattice(np.eye(2)))
    P = [[0.1, 0.1], [0.35, 0.15], [0.2, 0.4]]
    a, b = measure_triangle(T, *P), measure_triangle(Euclidean(2), *P)
    assert np.allclose(a.lengths, b.lengths, atol=1e-6)
    assert np.allclose(a.angles, b.angles, atol=1e-6)


def test_torus_triangle_across_the_seam():
    T = FlatTorus(DeckLattice(np.eye(2)))
    t = measure_triangle(T, [0.95, 0.5], [0.05, 0.5], [0.0, 0.6])
    assert t.lengths[2] == pytest.approx(0.1, abs=1e-9)


def test_long_thin_hyperbolic_triangle_fails_at_the_narrow_corners():
    H = Hyperbolic(2, -1.0)
    a, c = 5.0, 9.99
    gamma = math.acos((math.cosh(a) ** 2 - math.cosh(c)) / math.sinh(a) ** 2)
    rho = math.tanh(a / 2)
    verts = [[0, 0], [rho, 0], [rho * math.cos(gamma), rho * math.sin(gamma)]]
    t = measure_triangle(H, *verts, method="closed_form")
    assert np.allclose(t.lengths, [c, a, a], rtol=1e-9)
    rep = check_toponogov(t, MU_DEFAULT)
    assert not rep.passed
    assert rep.margins[0] > 0  # the wide corner passes
    assert rep.margins[1] < 0 and rep.margins[2] < 0


def test_check_toponogov_rejects_bad_mu():
    t = measure_triangle(Euclidean(2), [0, 0], [1, 0], [0, 1])
    with pytest.raises(InvalidInput):
        check_toponogov(t, 0.0)


def test_sampled_sphere_triangles_are_fat_and_valid():
    tris = sample_triangles(S2, 20, 0.5, seed=4, center_margin=0.7)
    assert len(tris) == 20
    for t in tris:
        assert t.lengths.max() <= 1.0 + 1e-9
        assert t.lengths.min() >= 0.5 / 20
        assert check_toponogov(t).passed


def test_sampling_is_seeded():
    a = sample_triangles(S2, 5, 0.5, seed=9)
    b = sample_triangles(S2, 5, 0.5, seed=9)
    assert all(np.array_equal(x.vertices, y.vertices) for x, y in zip(a, b))


def test_rac_on_flat_and_round_spaces():
    assert estimate_rac(Euclidean(2), [0, 0], MU_DEFAULT, r_max=10.0, n_triangles=20, seed=0) == 10.0
    assert estimate_rac(S2, [math.pi / 2, 0.0], MU_DEFAULT, r_max=1.0, n_triangles=20, seed=0) >= 1.0


def test_rac_detects_failure_in_hyperbolic_space():
    est = estimate_rac(Hyperbolic(2, -1.0), [0, 0], MU_DEFAULT, r_max=0.99, n_triangles=30, seed=0, detail=True)
    assert 0 < est.value < 0.99
    assert any(not ok for _, ok in est.history)
