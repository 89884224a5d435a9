import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ellipe

from ricci_lab.errors import ArgumentOutOfRange, PreconditionViolated
from ricci_lab.excess import (
    check_regular_point,
    excess_monotonicity,
    excess_value,
    excess_values,
    max_excess,
    regularity_angle_bound,
)
from ricci_lab.geodesics import integrate_geodesic
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import Ellipsoid, Euclidean, FlatTorus, Sphere

S2 = Sphere(2, 1.0)
Z2 = FlatTorus(DeckLattice(np.eye(2)))
P_ANTI = np.array([1.0, 0.3]), np.array([math.pi - 1.0, 0.3 + math.pi])
ELLIPSOID_MAX = math.pi - 2 * ellipe(1 - 0.8**2)  # at (pi/2, +-pi/2) for the equatorial antipodes


def torus_distance(a, b):
    d = np.asarray(b) - np.asarray(a)
    d = d - np.round(d)
    return np.linalg.norm(d, axis=-1)


def test_excess_vanishes_on_minimal_geodesics():
    p0 = np.array([1.0, 0.5])
    path = integrate_geodesic(S2, p0, [0.2, 1.1], 2.0)
    p1 = path.end
    for s in (0.3, 1.0, 1.7):
        assert excess_value(S2, p0, p1, path.point_at(s)) < 1e-8
    assert excess_value(Euclidean(2), [0, 0], [2, 0], [0.7, 0]) == 0.0


def test_excess_with_equal_endpoints_is_twice_the_distance():
    x = np.array([2.0, -1.0])
    assert excess_value(S2, P_ANTI[0], P_ANTI[0], x) == pytest.approx(2 * float(S2.distance(P_ANTI[0], x)), rel=1e-12)


def test_antipodal_excess_is_zero(rng):
    X = S2.sample_points(rng, 500)
    assert np.max(excess_values(S2, *P_ANTI, X)) <= 1e-6
    assert max_excess(S2, *P_ANTI, 2000, seed=5).value <= 1e-6


def test_torus_max_excess_against_grid_oracle():
    p0, p1 = np.array([0.0, 0.0]), np.array([0.5, 0.0])
    g = np.arange(400) / 400
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    oracle = torus_distance(p0, X) + torus_distance(p1, X) - 0.5
    assert oracle.max() == pytest.approx(math.sqrt(0.5), abs=1e-12)
    ours = excess_values(Z2, p0, p1, X)
    assert np.allclose(ours, np.maximum(oracle, 0), atol=1e-12)
    sampled = max_excess(Z2, p0, p1, 10_000, seed=0)
    assert 0.69 < sampled.value <= math.sqrt(0.5) + 1e-12


def test_ellipsoid_diameter_pair_excess():
    E = Ellipsoid(1, 1, 0.8)
    p0, p1 = np.array([math.pi / 2, 0.0]), np.array([math.pi / 2, math.pi])
    at_max = excess_value(E, p0, p1, [math.pi / 2, math.pi / 2])
    assert at_max == pytest.approx(ELLIPSOID_MAX, abs=1e-7)
    sampled = max_excess(E, p0, p1, 200, seed=1)
    assert 0 < sampled.value <= ELLIPSOID_MAX + 1e-7
    assert sampled.value == pytest.approx(ELLIPSOID_MAX, abs=1e-3)


@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.integers(0, 10_000))
def test_monotonicity_on_the_sphere(s0, s1, seed):
    rng = np.random.default_rng(seed)
    p0, p1, x = S2.sample_points(rng, 3)
    chk = excess_monotonicity(S2, p0, p1, x, s0, s1)
    assert chk.gap >= -1e-6


def test_regularity_angle_bound_values():
    for t in (0.01, 0.1, 1.0, 7.0):
        assert regularity_angle_bound(t, 0.0) == pytest.approx(18 * math.pi / 19, abs=1e-12)
        assert regularity_angle_bound(t, 2 * t) == pytest.approx(0.0, abs=1e-12)
    v = regularity_angle_bound(0.1, 0.01)
    assert v == pytest.approx((18 / 19) * math.acos(-1 - (1e-4 - 4e-3) / 0.02), abs=1e-15)
    assert v > math.pi / 2
    grid = [regularity_angle_bound(0.3, e) for e in np.linspace(0, 0.6, 61)]
    assert all(a > b for a, b in zip(grid, grid[1:]))


def test_regularity_angle_bound_errors():
    for t, e in ((0.0, 0.1), (0.1, -0.01), (0.1, 0.3)):
        with pytest.raises(ArgumentOutOfRange):
            regularity_angle_bound(t, e)


def test_regular_point_on_sphere_between_antipodes(rng):
    for x in S2.sample_points(rng, 5):
        if min(S2.distance(P_ANTI[0], x), S2.distance(P_ANTI[1], x)) < 0.1 or S2.chart_margin(x) < 0.05:
            continue
        rep = check_regular_point(S2, *P_ANTI, x, 0.1)
        assert rep.min_angle == pytest.approx(math.pi, abs=1e-4)
        assert rep.regular
        assert rep.local_excess <= 1e-8
        assert rep.predicted_bound == pytest.approx(regularity_angle_bound(rep.t, rep.local_excess), abs=1e-15)
        assert rep.predicted_bound > math.pi / 2


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_regular_point_in_the_plane(a, b):
    p, q, x = np.array([-1.0, 0.0]), np.array([1.0, 0.0]), np.array([a, b])
    if min(np.linalg.norm(x - p), np.linalg.norm(x - q)) < 0.1:
        return
    rep = check_regular_point(Euclidean(2), p, q, x, 0.1)
    u, v = p - x, q - x
    planar = math.acos(np.clip(u @ v / np.linalg.norm(u) / np.linalg.norm(v), -1, 1))
    assert rep.min_angle == pytest.approx(planar, abs=1e-6)
    # the angle exceeds pi/2 exactly inside the open disc with diameter pq
    if abs(np.linalg.norm(x) - 1) > 1e-6:
        assert rep.regular == (np.linalg.norm(x) < 1)


def test_regular_point_on_torus_against_lattice_oracle():
    p, q, x = np.array([0.0, 0.0]), np.array([0.5, 0.5]), np.array([0.5, 0.0])
    rep = check_regular_point(Z2, p, q, x, 0.1)
    to_p = [np.array(v, float) for v in ((-0.5, 0), (0.5, 0))]
    to_q = [np.array(v, float) for v in ((0, 0.5), (0, -0.5))]
    oracle = min(math.acos(a @ b / np.linalg.norm(a) / np.linalg.norm(b)) for a in to_p for b in to_q)
    assert rep.n_pairs == 4
    assert rep.min_angle == pytest.approx(oracle, abs=1e-9)
    assert not rep.regular


def test_regular_point_rejects_points_near_the_ends():
    with pytest.raises(PreconditionViolated):
        check_regular_point(S2, *P_ANTI, P_ANTI[0] + np.array([0.05, 0.0]), 0.1)
