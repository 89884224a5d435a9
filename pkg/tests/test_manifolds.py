import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.errors import CoordinateSingularity, InvalidInput, PointOutsideChart, UnsupportedManifold
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import (
    ConformalTorus,
    Ellipsoid,
    Euclidean,
    FlatTorus,
    Hyperbolic,
    Sphere,
    christoffel_at,
    curvature_at,
    from_id,
    metric_at,
    model_distance,
    scaled,
    sectional_curvature,
)

S2 = Sphere(2, 1.0)
Z2 = FlatTorus(DeckLattice(np.eye(2)))


def lowered(M, p):
    return np.einsum("lijk,lm->mijk", curvature_at(M, p), metric_at(M, p))


def test_metric_examples():
    assert np.array_equal(metric_at(Euclidean(2), [0.3, -2.0]), np.eye(2))
    assert np.array_equal(metric_at(Z2, [0.3, 0.7]), np.eye(2))
    th = 0.8
    assert np.allclose(metric_at(S2, [th, 1.1]), np.diag([1, math.sin(th) ** 2]), atol=1e-15)


def test_christoffel_examples():
    assert not np.any(christoffel_at(Euclidean(3), [1.0, 2.0, 3.0]))
    G = christoffel_at(S2, [math.pi / 2, 0.4])
    assert abs(G[0, 1, 1]) < 1e-15 and abs(G[1, 0, 1]) < 1e-15


def test_degenerate_ellipsoid_matches_round_sphere():
    E = Ellipsoid(1, 1, 1)
    for p in ([0.7, 0.2], [1.9, -2.5], [math.pi / 2, 1.0]):
        assert np.allclose(christoffel_at(E, p), christoffel_at(S2, p), atol=1e-9)
        assert np.allclose(metric_at(E, p), metric_at(S2, p), atol=1e-12)


@pytest.mark.parametrize(
    "M,K",
    [(Sphere(2, 1.0), 1.0), (Sphere(3, 2.0), 2.0), (Sphere(4, 0.5), 0.5), (Hyperbolic(2, -1.0), -1.0), (Hyperbolic(3, -1.0), -1.0)],
)
def test_constant_sectional_curvature(M, K, rng):
    for _ in range(5):
        p = M.sample_points(rng, 1)[0]
        X, Y = rng.normal(size=(2, M.dim))
        assert sectional_curvature(M, p, X, Y) == pytest.approx(K, abs=1e-6)


def test_flat_curvature_vanishes():
    assert not np.any(curvature_at(Euclidean(3), [0.0, 1.0, 2.0]))
    assert np.allclose(curvature_at(Z2, [0.2, 0.4]), 0)


@pytest.mark.parametrize("ident", ["sphere:n=3,K=1", "hyperbolic:n=3,K=-1", "ellipsoid:a=1,b=1.3,c=0.8", "ctorus:amp=0.05", "revolution:bulge=0.2"])
def test_curvature_symmetries(ident, rng):
    M = from_id(ident)
    for p in M.sample_points(rng, 3):
        if M.chart_margin(p) < 0.05:
            continue
        R = lowered(M, p)
        assert np.allclose(R, -R.transpose(1, 0, 2, 3), atol=1e-6)
        assert np.allclose(R, -R.transpose(0, 1, 3, 2), atol=1e-6)
        bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
        assert np.allclose(bianchi, 0, atol=1e-6)


@pytest.mark.parametrize("abc", [(1.0, 1.0, 0.8), (1.0, 1.3, 0.8), (2.0, 1.0, 1.5)])
def test_ellipsoid_gauss_curvature(abc, rng):
    a, b, c = abc
    E = Ellipsoid(a, b, c)
    for p in E.sample_points(rng, 5):
        x, y, z = E.embed(p)
        exact = 1 / (a * b * c) ** 2 / (x**2 / a**4 + y**2 / b**4 + z**2 / c**4) ** 2
        assert sectional_curvature(E, p, [1, 0], [0, 1]) == pytest.approx(exact, rel=1e-6)


@given(st.lists(st.floats(0.05, 0.95), min_size=4, max_size=4))
def test_metric_symmetric_positive_definite(xs):
    for M, p in ((Ellipsoid(1, 1.3, 0.8), [1 + xs[0], 6 * xs[1]]), (ConformalTorus(DeckLattice(np.eye(2)), 0.05, (1, 0)), xs[2:])):
        g = metric_at(M, p)
        assert np.allclose(g, g.T)
        assert np.all(np.linalg.eigvalsh(g) > 0)


def test_model_distance_examples():
    assert model_distance(Z2, [0, 0], [0.9, 0]) == pytest.approx(0.1, abs=1e-15)
    assert model_distance(S2, [0.5, 0.2], [math.pi - 0.5, 0.2 + math.pi]) == pytest.approx(math.pi, abs=1e-12)
    assert model_distance(Euclidean(3), [0, 0, 0], [3, 4, 0]) == 5
    with pytest.raises(UnsupportedManifold):
        model_distance(Ellipsoid(1, 1, 0.8), [1, 0], [2, 0])


def test_hyperbolic_distance_from_origin():
    H = Hyperbolic(2, -1.0)
    r = 0.5
    assert model_distance(H, [0, 0], [r, 0]) == pytest.approx(2 * math.atanh(r), rel=1e-12)


def test_scaling_multiplies_distances():
    H = Hyperbolic(2, -1.0)
    p, q = [0.1, 0.2], [-0.3, 0.4]
    assert model_distance(scaled(H, 3.0), p, q) == pytest.approx(3 * model_distance(H, p, q), rel=1e-12)


def test_invalid_construction():
    with pytest.raises(InvalidInput):
        Sphere(2, -1.0)
    with pytest.raises(InvalidInput):
        Hyperbolic(2, 1.0)
    with pytest.raises(InvalidInput):
        Euclidean(1)
    with pytest.raises(InvalidInput):
        from_id("klein-bottle")


def test_chart_errors():
    with pytest.raises(PointOutsideChart):
        metric_at(Hyperbolic(2, -1.0), [1.2, 0])
    with pytest.raises(CoordinateSingularity):
        metric_at(S2, [0.0, 0.0])
    with pytest.raises(PointOutsideChart):
        metric_at(S2, [1.0, 0.0, 0.0])


@pytest.mark.parametrize(
    "ident",
    ["euclidean:n=3", "sphere:n=2,K=4", "hyperbolic:n=2,K=-1", "torus:basis=[[1,0],[0.5,2]]", "ellipsoid:a=1,b=1,c=0.8",
     "ctorus:amp=0.05,basis=[[8,0],[0,8]],wave=(1,0)", "scaled:c=2;hyperbolic:n=2,K=-1"],
)  # fmt: skip
def test_id_round_trip(ident):
    M = from_id(ident)
    assert from_id(M.id).id == M.id


def test_samples_inside_chart(rng):
    for ident in ("sphere:n=3,K=1", "hyperbolic:n=2,K=-1", "ellipsoid:a=1,b=1,c=0.8", "torus:basis=[[2,0],[1,3]]"):
        M = from_id(ident)
        X = M.sample_points(rng, 200)
        assert np.all(M.chart_margin(X) > 0)
