import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ricci_lab.errors import InvalidInput, PairingFailure, PreconditionViolated, UnsupportedManifold
from ricci_lab.fibration import (
    angle_transfer_report,
    build_coupling,
    build_fibration,
    check_submersion,
    chi,
    chi_prime,
    evaluate_maps,
    f_N,
    fibration_map,
    grid_points,
    torus_diameter,
)
from ricci_lab.geodesics import integrate_geodesic
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import ConformalTorus, FlatTorus, Sphere

T8 = FlatTorus(DeckLattice(8 * np.eye(2)))
SIGMA = 0.9


@pytest.fixture(scope="module")
def flat_fm():
    c = build_coupling(T8, T8, "identity-chart", 0.2, seed=0)
    return build_fibration(c, SIGMA, seed=0)


def test_chi_clauses_exact():
    s = 0.7
    assert chi(s, s) == 0.0 and chi(s / 2, s) == 1.0
    assert np.all(chi(np.linspace(s, 5 * s, 50), s) == 0.0)
    assert np.all(chi(np.linspace(0, s / 2, 50), s) == 1.0)
    mid = chi(0.75 * s, s)
    assert 0 < mid < 1 and chi_prime(0.75 * s, s) < 0
    with pytest.raises(InvalidInput):
        chi(0.1, 0.0)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.1, 2.0))
def test_chi_monotone_and_bounded(a, b, s):
    lo, hi = min(a, b), max(a, b)
    assert 0.0 <= chi(hi, s) <= chi(lo, s) <= 1.0


def test_chi_prime_matches_finite_differences():
    s, h = 1.0, 1e-6
    for t in np.linspace(0.55, 0.95, 9):
        fd = (chi(t + h, s) - chi(t - h, s)) / (2 * h)
        assert chi_prime(t, s) == pytest.approx(fd, abs=1e-6)


def test_torus_diameter():
    assert torus_diameter(DeckLattice(2 * np.eye(2))) == pytest.approx(math.sqrt(2), abs=1e-12)
    hexagonal = DeckLattice(np.array([[1.0, 0.0], [0.5, math.sqrt(3) / 2]]))
    assert torus_diameter(hexagonal) == pytest.approx(1 / math.sqrt(3), abs=1e-12)


def test_identity_coupling_nets(flat_fm):
    c = flat_fm.coupling
    assert np.array_equal(c.net_M, c.net_N)
    assert c.eta == 0.0 and np.all(c.pairing == 0)
    assert c.separation_M > c.epsilon and c.separation_N > c.epsilon
    assert c.density_M <= 7 * c.epsilon
    assert c.density_M <= 1.2 * c.epsilon  # a maximal eps-separated net is eps-dense up to probe sampling


def test_coupling_error_paths():
    ct = ConformalTorus(DeckLattice(8 * np.eye(2)), 0.05, (1, 0))
    with pytest.raises(PairingFailure):
        build_coupling(ct, T8, "identity-chart", 0.05, seed=0)
    with pytest.raises(UnsupportedManifold):
        build_coupling(T8, T8, "graph-distance", 0.2, seed=0)
    with pytest.raises(UnsupportedManifold):
        build_coupling(T8, Sphere(2, 1.0), "identity-chart", 0.2, seed=0)


def test_sigma_must_stay_below_a_quarter_of_the_injectivity_radius(flat_fm):
    with pytest.raises(PreconditionViolated):
        build_fibration(flat_fm.coupling, 1.2, seed=0)


def test_fM_components(flat_fm):
    c = flat_fm.coupling
    i = 17
    F, support = evaluate_maps(flat_fm, c.net_M[i])
    assert F[i] == 1.0
    far = np.array([k for k in range(c.size) if float(T8.distance(c.net_M[i], c.net_M[k])) > SIGMA + c.epsilon])
    assert np.all(F[far] == 0.0)
    assert set(np.flatnonzero(F)) <= set(support)


def test_fM_close_to_fN_on_identity(flat_fm, rng):
    lip = 15 / 8 / (SIGMA / 2)  # max |chi'| of the quintic smoothstep on [sigma/2, sigma]
    for x in T8.sample_points(rng, 5):
        F, _ = evaluate_maps(flat_fm, x)
        assert np.max(np.abs(F - f_N(flat_fm, x))) <= lip * flat_fm.coupling.epsilon


def test_fibration_map_near_identity(flat_fm):
    c = flat_fm.coupling
    for x in grid_points(T8, 4):
        p = fibration_map(flat_fm, x)
        assert float(T8.distance(x, p.y)) <= 5 * c.epsilon
        assert p.stationarity <= 1e-6
    for i in (0, 5, 40):
        y = fibration_map(flat_fm, c.net_M[i]).y
        assert float(T8.distance(y, c.net_N[i])) <= 2 * c.epsilon


def test_identity_submersion_singular_values(flat_fm):
    for x in grid_points(T8, 2):
        _, sv = check_submersion(flat_fm, x)
        assert np.allclose(sv, 1.0, atol=0.1)


def test_angle_transfer_identity_defect(flat_fm):
    c = flat_fm.coupling
    p = np.array([1.0, 2.0])
    c1 = integrate_geodesic(T8, p, [1.0, 0.2], 0.8)
    c2 = integrate_geodesic(T8, p, [-0.3, 1.0], 0.8)
    rep = angle_transfer_report(T8, T8, c, c1, c2, c1, c2, mu=18 / 19, nu=0.0)
    assert rep.theta == rep.theta_prime
    assert rep.defect == pytest.approx(abs(1 - 18 / 19) * rep.theta - (1 - 18 / 19) * math.pi, abs=1e-15)
    assert rep.defect <= 0
