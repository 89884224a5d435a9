import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.geodesics import (
    estimate_conjugate_radius,
    exp_many,
    first_conjugate_time,
    geodesic_distance,
    integrate_geodesic,
    minimal_geodesics,
)
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import Ellipsoid, Euclidean, FlatTorus, Hyperbolic, Sphere, from_id

S2 = Sphere(2, 1.0)
Z2 = FlatTorus(DeckLattice(np.eye(2)))


def sphere_point(theta, phi):
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def speeds(M, path):
    g = M.metric(path.points)
    return np.sqrt(np.einsum("ti,tij,tj->t", path.velocities, g, path.velocities))


def test_equator_closes():
    path = integrate_geodesic(S2, [math.pi / 2, 0.0], [0.0, 1.0], 2 * math.pi)
    assert np.linalg.norm(S2.chart_diff(path.end, np.array([math.pi / 2, 0.0]))) < 1e-4


def test_straight_line_and_torus_wrap():
    path = integrate_geodesic(Euclidean(2), [0, 0], [1, 0], 1.0)
    assert np.allclose(path.end, [1, 0], atol=1e-12)
    path = integrate_geodesic(Z2, [0.2, 0.3], [1, 0], 1.0)
    assert np.linalg.norm(Z2.chart_diff(path.end, np.array([0.2, 0.3]))) < 1e-9


def test_path_invariants():
    p, v = np.array([1.0, 0.3]), np.array([0.4, 1.7])
    path = integrate_geodesic(S2, p, v, 2.0)
    s = speeds(S2, path)
    assert np.all(np.abs(s - 1) < 1e-5)
    assert path.times[-1] == pytest.approx(path.length)
    assert path.length == pytest.approx(2.0)


def test_sphere_unique_minimal_geodesic():
    p = np.array([1.0, 0.5])
    q = integrate_geodesic(S2, p, [0.3, 0.8], 1.0).end
    paths = minimal_geodesics(S2, p, q, 1e-3)
    assert len(paths) == 1
    assert paths[0].length == pytest.approx(1.0, abs=1e-4)
    assert paths[0].is_minimal
    assert np.all(np.abs(speeds(S2, paths[0]) - 1) < 1e-5)


def test_sphere_antipodes_have_many_minimal_geodesics():
    p = np.array([1.0, 0.3])
    q = np.array([math.pi - 1.0, 0.3 + math.pi])
    paths = minimal_geodesics(S2, p, q, 1e-3)
    assert len(paths) >= 8
    assert all(abs(g.length - math.pi) < 1e-3 for g in paths)
    for g in paths:
        assert np.linalg.norm(S2.chart_diff(g.end, q)) < 1e-6


def test_torus_half_period_has_two_minimal_geodesics():
    paths = minimal_geodesics(Z2, [0, 0], [0.5, 0], 0.0)
    assert [round(g.length, 9) for g in paths] == [0.5, 0.5]
    dirs = sorted(round(float(g.initial_velocity[0]), 6) for g in paths)
    assert dirs == [-1.0, 1.0]


def test_shooting_matches_closed_form_on_hyperbolic(rng):
    H = Hyperbolic(2, -1.0)
    for _ in range(5):
        p, q = H.sample_points(rng, 2)
        assert geodesic_distance(H, p, q, "shooting") == pytest.approx(geodesic_distance(H, p, q, "closed_form"), rel=1e-8)


def test_ellipsoid_shooting_agrees_with_round_sphere(rng):
    E = Ellipsoid(1, 1, 1)
    for p, q in rng.permutation(E.sample_points(rng, 6)).reshape(3, 2, 2):
        assert geodesic_distance(E, p, q, "shooting") == pytest.approx(float(S2.distance(p, q)), abs=1e-7)


def test_ellipsoid_half_meridian_over_the_pole():
    from scipy.special import ellipe

    E = Ellipsoid(1, 1, 0.8)
    d = geodesic_distance(E, [math.pi / 2, 0.0], [math.pi / 2, math.pi], "shooting")
    assert d == pytest.approx(2 * ellipe(1 - 0.64), rel=1e-7)


@given(st.floats(0.3, 2.8), st.floats(-3.0, 3.0), st.floats(0, 2 * math.pi), st.floats(0.05, 2.5))
def test_sphere_exp_lands_at_distance(theta, phi, angle, t):
    p = np.array([theta, phi])
    u = np.array([math.cos(angle), math.sin(angle) / math.sin(theta)])
    x = exp_many(S2, p[None], (t * u)[None])[0]
    if not np.all(np.isfinite(x)):
        return
    assert float(S2.distance(p, x)) == pytest.approx(t, abs=1e-7)


@pytest.mark.parametrize("M,expected,tol", [(Sphere(2, 1.0), math.pi, 1e-3), (Sphere(3, 1.0), math.pi, 1e-3), (Sphere(2, 4.0), math.pi / 2, 1e-2)])
def test_first_conjugate_time_on_spheres(M, expected, tol, rng):
    p = M.sample_points(rng, 1)[0]
    p[0] = 1.2  # keep the geodesic clear of the pole band
    v = rng.normal(size=M.dim)
    rep = first_conjugate_time(M, p, v, 10.0)
    assert rep.first_conjugate_time == pytest.approx(expected, abs=tol)


@pytest.mark.parametrize("ident", ["euclidean:n=2", "euclidean:n=3", "torus:n=2", "hyperbolic:n=2,K=-1"])
def test_no_conjugate_points_without_positive_curvature(ident):
    M = from_id(ident)
    p = np.zeros(M.dim)
    v = np.zeros(M.dim)
    v[0] = 1.0
    if M.kind == "hyperbolic":
        # unit speed on the disc needs a slow chart velocity; the geodesic leaves toward the boundary
        v *= 0.5
    rep = first_conjugate_time(M, p, v, 10.0)
    assert rep.first_conjugate_time is None


def test_conjugate_radius_estimates():
    assert estimate_conjugate_radius(Sphere(2, 4.0), 32, 10.0, seed=1) == pytest.approx(math.pi / 2, abs=1e-2)
    assert estimate_conjugate_radius(Euclidean(3), 16, 10.0, seed=1) == math.inf


def test_ellipsoid_conjugate_radius_within_rauch_bounds():
    E = Ellipsoid(1, 1, 0.8)
    k_max, k_min = 1 / 0.64, 0.64
    est = estimate_conjugate_radius(E, 64, 10.0, seed=3, detail=True)
    assert math.pi / math.sqrt(k_max) - 1e-3 <= est.value <= math.pi / math.sqrt(k_min)
    assert est.n_samples == 64
