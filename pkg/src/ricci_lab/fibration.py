"""Gromov-Hausdorff coupling nets and the fibration map f = f_N^{-1} . pi . f_M.

M may be a flat torus or a conformally perturbed torus; N must be a flat
torus (its injectivity radius and curvature are then known exactly).  The
cross distance "identity-chart" identifies the two charts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.ndimage import map_coordinates, spline_filter
from scipy.optimize import least_squares
from scipy.spatial import Voronoi, cKDTree

from .errors import (
    HypothesisViolated,
    InvalidInput,
    OptimizerDivergence,
    OutsideReach,
    PairingFailure,
    PreconditionViolated,
    QuadratureFailure,
    UnsupportedManifold,
)
from .geodesics import GeodesicPath, integrate_geodesic, minimal_geodesics, minimal_geodesics_many, random_unit_vectors
from .lattice import DeckLattice
from .manifolds import ConformalTorus, FlatTorus, ManifoldSpec

N_QUAD = 256
GRID_COLUMNS = ["x", "f_x", "displacement", "min_singular_value"]
ANGLE_COLUMNS = ["theta", "theta_prime", "defect", "nu"]


# ---------------------------------------------------------------------------
# bump function
# ---------------------------------------------------------------------------


def chi(t, sigma: float):
    """1 for t <= sigma/2, 0 for t >= sigma, quintic smoothstep in between."""
    if sigma <= 0:
        raise InvalidInput("sigma must be positive")
    t = np.asarray(t, float)
    s = np.clip((t - 0.5 * sigma) / (0.5 * sigma), 0.0, 1.0)
    out = 1.0 - s**3 * (10 - 15 * s + 6 * s * s)
    out = np.where(t <= 0.5 * sigma, 1.0, out)
    return np.where(t >= sigma, 0.0, out)


def chi_prime(t, sigma: float):
    t = np.asarray(t, float)
    s = (t - 0.5 * sigma) / (0.5 * sigma)
    d = -30 * s * s * (1 - s) ** 2 / (0.5 * sigma)
    return np.where((t > 0.5 * sigma) & (t < sigma), d, 0.0)


# ---------------------------------------------------------------------------
# distances on the supported tori
# ---------------------------------------------------------------------------


def torus_diameter(lattice: DeckLattice) -> float:
    """Covering radius of the lattice, i.e. the diameter of the flat torus."""
    rb = lattice.reduced_basis
    ks = np.array(np.meshgrid(*[np.arange(-2, 3)] * lattice.dim, indexing="ij")).reshape(lattice.dim, -1).T
    pts = ks @ rb
    vor = Voronoi(pts)
    origin = int(np.flatnonzero(~ks.any(axis=1))[0])
    region = vor.regions[vor.point_region[origin]]
    return float(np.max(np.linalg.norm(vor.vertices[region], axis=1)))


@lru_cache(maxsize=8)
def _conformal_table(amp: float, k: float, r_max: float, n_phase: int, n_angle: int, n_radius: int):
    """Ratio d / |chart displacement| for the metric (1 + amp sin(2 pi k u)) on the plane.

    Indexed by phase fraction of the base point, direction angle in [0, pi]
    relative to the wave, and radius; filled by geodesic shooting.
    """
    cells = int(math.ceil(4 * k * max(1.0, r_max)))
    side = 2 * cells / k
    plane = ConformalTorus(DeckLattice(side * np.eye(2)), amp, (k, 0.0))
    phase = np.arange(n_phase) / n_phase
    theta = np.linspace(0.0, np.pi, n_angle)
    radius = np.linspace(0.0, r_max, n_radius + 1)
    S, T, R = np.meshgrid(phase, theta, radius[1:], indexing="ij")
    base = np.stack([(S.ravel() + cells) / k, np.full(S.size, side / 2)], axis=1)
    ends = base + R.ravel()[:, None] * np.stack([np.cos(T.ravel()), np.sin(T.ravel())], axis=1)
    found = minimal_geodesics_many(plane, list(zip(base, ends)), 0.0, n_directions=2)
    L = np.array([paths[0].length for paths in found]).reshape(S.shape)
    G = np.empty((n_phase, n_angle, n_radius + 1))
    G[..., 0] = np.sqrt(1 + amp * np.sin(2 * np.pi * phase))[:, None]
    G[..., 1:] = L / R
    pad = 3
    G = np.pad(G, ((pad, pad), (0, 0), (0, 0)), mode="wrap")
    G = np.pad(G, ((0, 0), (pad, pad), (0, 0)), mode="reflect")
    # negative radius continues smoothly as the opposite direction, reflected
    neg = G[:, ::-1, 1 : pad + 1][:, :, ::-1]
    G = np.concatenate([neg, G, np.repeat(G[:, :, -1:], pad, axis=2)], axis=2)
    return G, pad


class DistanceModel:
    """Vectorized distance on a supported torus with chart-comparison constants.

    ``lo * |D| <= d <= hi * |D|`` where D is the shortest chart displacement.
    Conformal tori interpolate a shooting table for displacements up to
    ``r_max`` and fall back to direct shooting beyond it.
    """

    def __init__(self, M: ManifoldSpec, r_max: float = 1.5):
        self.M = M
        self.r_max = r_max
        self._table = None
        if isinstance(M, FlatTorus):
            self.lo = self.hi = 1.0
        elif isinstance(M, ConformalTorus):
            self.lo, self.hi = math.sqrt(1 - M.amp), math.sqrt(1 + M.amp)
            self.k = float(np.linalg.norm(M.wave))
            self.w = np.asarray(M.wave, float) / self.k
            self.n_phase, self.n_angle, self.n_radius = 32, 17, int(math.ceil(r_max / 0.05))
            if M.amp > 0:
                self._table = "lazy"
            diam = torus_diameter(M.lattice)
            self._shifts = M.lattice.translates_within(np.zeros(2), 2 * self.hi / self.lo * max(r_max, diam))[1]
        else:
            raise UnsupportedManifold(f"coupling distances are available on flat and conformal tori, not {M.id}")

    def chart_gap(self, A, B):
        return np.linalg.norm(self.M.chart_diff(A, B), axis=-1)

    def _ready(self):
        if isinstance(self._table, str):
            G, pad = _conformal_table(self.M.amp, self.k, self.r_max, self.n_phase, self.n_angle, self.n_radius)
            self._table = (spline_filter(G, order=3, mode="nearest"), pad)

    def local(self, X, D) -> np.ndarray:
        """d(x, x + D) for displacements shorter than r_max, taken without lattice reduction."""
        X, D = np.broadcast_arrays(np.asarray(X, float), np.asarray(D, float))
        n = np.linalg.norm(D, axis=-1)
        if self._table is None:
            return n
        self._ready()
        if np.any(n > self.r_max):
            raise InvalidInput(f"local displacement {n.max():.6g} exceeds the tabulated radius {self.r_max}")
        shape = n.shape
        return self._lookup(X.reshape(-1, 2), D.reshape(-1, 2), n.ravel()).reshape(shape)

    def __call__(self, A, B) -> np.ndarray:
        A, B = np.broadcast_arrays(np.asarray(A, float), np.asarray(B, float))
        if self._table is None:
            return self.chart_gap(A, B)
        self._ready()
        shape = A.shape[:-1]
        A, B = A.reshape(-1, 2), B.reshape(-1, 2)
        D0 = self.M.chart_diff(A, B)
        n0 = np.linalg.norm(D0, axis=1)
        best = np.full(len(A), np.inf)
        for v in self._shifts:
            D = D0 + v
            n = np.linalg.norm(D, axis=1)
            rows = np.flatnonzero((n <= self.hi / self.lo * n0 + 1e-12) & (n <= self.r_max))
            if len(rows):
                best[rows] = np.minimum(best[rows], self._lookup(A[rows], D[rows], n[rows]))
        far = np.flatnonzero(~np.isfinite(best))
        if len(far):
            found = minimal_geodesics_many(self.M, list(zip(A[far], B[far])), 0.0)
            best[far] = [paths[0].length if paths else 0.0 for paths in found]
        return best.reshape(shape)

    def _lookup(self, A, D, n):
        G, pad = self._table
        s = np.mod(self.k * (A @ self.w), 1.0)
        c1 = D @ self.w
        c2 = D @ np.array([-self.w[1], self.w[0]])
        theta = np.arctan2(np.abs(c2), c1)
        coords = np.stack(
            [
                s * self.n_phase + pad,
                theta / (np.pi / (self.n_angle - 1)) + pad,
                n / (self.r_max / self.n_radius) + pad,
            ]
        )
        return n * map_coordinates(G, coords, order=3, mode="nearest", prefilter=False)


class _TiledTree:
    """KD-tree over chart points and their 3x3 lattice translates."""

    def __init__(self, lattice: DeckLattice, P: np.ndarray):
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]) @ lattice.basis
        self.count = len(P)
        self.tree = cKDTree((P[None] + shifts[:, None]).reshape(-1, 2))

    def ball(self, x, r) -> np.ndarray:
        return np.unique(np.asarray(self.tree.query_ball_point(x, r), dtype=int) % self.count)

    def nearest(self, X, k):
        _, idx = self.tree.query(X, k=k)
        return np.asarray(idx) % self.count

    def pairs(self, r) -> np.ndarray:
        pr = self.tree.query_pairs(r, output_type="ndarray") % self.count
        pr = np.sort(pr, axis=1)
        pr = pr[pr[:, 0] != pr[:, 1]]
        return np.unique(pr, axis=0)


# ---------------------------------------------------------------------------
# coupling and nets
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class GHCoupling:
    M: ManifoldSpec
    N: ManifoldSpec
    epsilon: float
    eta: float
    net_M: np.ndarray
    net_N: np.ndarray
    pairing: np.ndarray
    separation_M: float
    separation_N: float
    density_M: float
    density_N: float
    cross_name: str = "identity-chart"
    dist_M: DistanceModel = field(repr=False, default=None)
    dist_N: DistanceModel = field(repr=False, default=None)
    tree_M: _TiledTree = field(repr=False, default=None)
    tree_N: _TiledTree = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return len(self.net_M)

    def cross_distance(self, x, y) -> np.ndarray:
        """Upper bound min(d_M(x, y), d_N(x, y)) + eta on the coupling metric of the disjoint union."""
        return np.minimum(self.dist_M(x, y), self.dist_N(x, y)) + self.eta

    def report(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "eta": self.eta,
            "size": self.size,
            "max_pairing": float(self.pairing.max()) if self.size else 0.0,
            "separation_M": self.separation_M,
            "separation_N": self.separation_N,
            "density_M": self.density_M,
            "density_N": self.density_N,
        }


def _distortion_eta(M: ManifoldSpec, N: ManifoldSpec) -> float:
    """Half the distortion sup |d_M - d_N| of the identity chart map, bounded analytically."""
    if not np.allclose(M.lattice.basis, N.lattice.basis):
        raise UnsupportedManifold("identity-chart coupling needs equal deck lattices")
    if isinstance(M, FlatTorus):
        return 0.0
    diam = torus_diameter(N.lattice)
    return 0.5 * max(math.sqrt(1 + M.amp) - 1, 1 - math.sqrt(1 - M.amp)) * diam


def _greedy_net(dM: DistanceModel, dN: DistanceModel, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Maximal set of seeded candidates, pairwise more than eps apart in both metrics."""
    lat = dM.M.lattice
    counts = np.maximum(1, np.ceil(3 * np.linalg.norm(lat.basis, axis=1) / eps)).astype(int)
    grid = np.stack(np.meshgrid(*[np.arange(c) / c for c in counts], indexing="ij"), axis=-1).reshape(-1, 2)
    grid = grid + rng.random(grid.shape) / counts
    cand = dM.M.normalize(grid @ lat.basis)
    cand = cand[rng.permutation(len(cand))]
    tree = _TiledTree(lat, cand)
    reach = eps / min(dM.lo, dN.lo)
    alive = np.ones(len(cand), dtype=bool)
    net = []
    for i in range(len(cand)):
        if not alive[i]:
            continue
        net.append(i)
        near = tree.ball(cand[i], reach)
        near = near[alive[near]]
        if len(near):
            close = (dM(cand[i], cand[near]) <= eps) | (dN(cand[i], cand[near]) <= eps)
            alive[near[close]] = False
    return cand[np.array(net)]


def _separation(d: DistanceModel, tree: _TiledTree, P: np.ndarray, eps: float) -> float:
    r = 2 * eps / d.lo
    pr = tree.pairs(r)
    if not len(pr):
        return d.lo * r
    return float(np.min(d(P[pr[:, 0]], P[pr[:, 1]])))


def _density(d: DistanceModel, tree: _TiledTree, P: np.ndarray, probes: np.ndarray) -> float:
    idx = tree.nearest(probes, min(6, len(P)))
    idx = idx.reshape(len(probes), -1)
    dist = d(np.repeat(probes, idx.shape[1], axis=0), P[idx.ravel()]).reshape(idx.shape)
    return float(np.max(np.min(dist, axis=1)))


def build_coupling(
    M: ManifoldSpec,
    N: ManifoldSpec,
    cross_distance: str,
    eps: float,
    seed: int,
    n_probes: int = 400,
    r_max: float = 1.5,
) -> GHCoupling:
    """Greedy eps-separated net on M, paired through the identity chart with N."""
    if cross_distance != "identity-chart":
        raise UnsupportedManifold(f"cross distance {cross_distance!r} is not implemented")
    if not isinstance(N, FlatTorus):
        raise UnsupportedManifold("the target N must be a flat torus")
    if not eps > 0:
        raise InvalidInput("epsilon must be positive")
    dM, dN = DistanceModel(M, r_max), DistanceModel(N, r_max)
    eta = _distortion_eta(M, N)
    if eta >= eps:
        raise PairingFailure(f"coupling gap {eta:.6g} is not below epsilon {eps}")
    rng = np.random.default_rng(seed)
    net = _greedy_net(dM, dN, eps, rng)
    pairing = np.full(len(net), eta)
    tree = _TiledTree(M.lattice, net)
    probes = M.sample_points(rng, n_probes)
    return GHCoupling(
        M, N, eps, eta, net, net.copy(), pairing,
        _separation(dM, tree, net, eps), _separation(dN, tree, net, eps),
        _density(dM, tree, net, probes), _density(dN, tree, net, probes),
        dist_M=dM, dist_N=dN, tree_M=tree, tree_N=tree,
    )  # fmt: skip


# ---------------------------------------------------------------------------
# the maps
# ---------------------------------------------------------------------------


def _ball_offsets(dM: DistanceModel, center, eps, n, seed, index, rounds: int = 64):
    """n rejection samples of B_M(center, eps), as chart offsets, with sqrt(det g) weights."""
    rng = np.random.default_rng([seed, index])
    rad = eps / dM.lo
    got: list[np.ndarray] = []
    total = 0
    for _ in range(rounds):
        u = rng.uniform(-rad, rad, size=(2 * n, 2))
        u = u[np.einsum("ij,ij->i", u, u) < rad * rad]
        keep = dM.local(center, u) < eps
        got.append(u[keep])
        total += int(keep.sum())
        if total >= n:
            U = np.concatenate(got)[:n]
            return U, np.asarray(dM.M.volume_density(center + U), float)
    raise QuadratureFailure(f"ball sampling around net point {index} accepted only {total} of {n} points")


@dataclass(eq=False)
class FibrationMap:
    coupling: GHCoupling
    sigma: float
    R: float
    reach: float
    seed: int
    offsets: np.ndarray = field(repr=False)
    weights: np.ndarray | None = field(repr=False)

    @property
    def S(self) -> int:
        return self.coupling.size


@dataclass(frozen=True, eq=False)
class FibrationPoint:
    x: np.ndarray
    y: np.ndarray
    residual: float
    stationarity: float
    start_index: int


def _fN_parts(fm: FibrationMap, y, idx):
    c = fm.coupling
    D = c.N.chart_diff(c.net_N[idx], np.broadcast_to(y, (len(idx), 2)))
    d = np.linalg.norm(D, axis=1)
    val = chi(d, fm.sigma)
    with np.errstate(invalid="ignore", divide="ignore"):
        grad = np.where(d[:, None] > 0, chi_prime(d, fm.sigma)[:, None] * D / d[:, None], 0.0)
    return val, grad


def f_N(fm: FibrationMap, y) -> np.ndarray:
    return _fN_parts(fm, np.asarray(y, float), np.arange(fm.S))[0]


def evaluate_maps(fm: FibrationMap, x) -> tuple[np.ndarray, np.ndarray]:
    """Dense f_M(x) and the indices of its possibly nonzero components."""
    c = fm.coupling
    x = c.M.check_point(x)
    dM = c.dist_M
    support = c.tree_M.ball(x, (fm.sigma + c.epsilon) / dM.lo)
    out = np.zeros(fm.S)
    if len(support):
        C = c.M.chart_diff(np.broadcast_to(x, (len(support), 2)), c.net_M[support])
        D = C[:, None, :] + fm.offsets[support]
        d = dM.local(x, D)
        if fm.weights is None:
            avg = d.mean(axis=1)
        else:
            w = fm.weights[support]
            avg = np.einsum("kn,kn->k", w, d) / w.sum(axis=1)
        out[support] = chi(avg, fm.sigma)
    return out, support


def estimate_reach(fm: FibrationMap, n_probes: int = 400, seed: int = 0) -> float:
    """Federer reach inf |b - a|^2 / (2 dist(b - a, T_a)) over sampled image points of f_N.

    Returns 0 when f_N fails to be an immersion at some probe.
    """
    c = fm.coupling
    rng = np.random.default_rng([seed, 7])
    Y = c.N.sample_points(rng, n_probes)
    rows, cols, vals, q0, q1 = [], [], [], [], []
    for a, y in enumerate(Y):
        idx = c.tree_N.ball(y, fm.sigma)
        val, grad = _fN_parts(fm, y, idx)
        if len(idx) < 2 or np.linalg.svd(grad, compute_uv=False)[-1] < 1e-9:
            return 0.0
        Q = np.linalg.qr(grad)[0]
        rows.append(np.full(len(idx), a))
        cols.append(idx)
        vals.append(val)
        q0.append(Q[:, 0])
        q1.append(Q[:, 1])
    r, k = np.concatenate(rows), np.concatenate(cols)
    shape = (n_probes, fm.S)
    F = sparse.csr_matrix((np.concatenate(vals), (r, k)), shape=shape)
    Q0 = sparse.csr_matrix((np.concatenate(q0), (r, k)), shape=shape)
    Q1 = sparse.csr_matrix((np.concatenate(q1), (r, k)), shape=shape)
    G = (F @ F.T).toarray()
    P = np.stack([(Q0 @ F.T).toarray(), (Q1 @ F.T).toarray()], axis=-1)
    P -= np.einsum("aai->ai", P)[:, None, :]
    sq = np.diag(G)[:, None] + np.diag(G)[None, :] - 2 * G
    normal = np.sqrt(np.maximum(sq - np.einsum("abi,abi->ab", P, P), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((normal > 1e-12) & (sq > 1e-24), sq / (2 * normal), np.inf)
    return float(np.min(ratio))


def build_fibration(
    coupling: GHCoupling,
    sigma: float,
    r0: float | None = None,
    rac: float | None = None,
    seed: int = 0,
    n_quad: int = N_QUAD,
    reach_probes: int = 400,
) -> FibrationMap:
    """Ball quadrature for f_M and the reach of f_N(N); requires sigma < R = min(i0, r0, rac) / 4."""
    i0 = coupling.N.injectivity_radius
    R = 0.25 * min(v for v in (i0, r0, rac) if v is not None)
    if not 0 < sigma < R:
        raise PreconditionViolated(f"sigma={sigma} must lie in (0, R) with R={R:.6g}")
    dM = coupling.dist_M
    if (sigma + 2 * coupling.epsilon) / dM.lo > dM.r_max:
        raise PreconditionViolated(f"sigma + 2 eps exceeds the tabulated distance radius {dM.r_max}")
    offsets = np.empty((coupling.size, n_quad, 2))
    weights = np.empty((coupling.size, n_quad))
    for i, m in enumerate(coupling.net_M):
        offsets[i], weights[i] = _ball_offsets(dM, m, coupling.epsilon, n_quad, seed, i)
    uniform = isinstance(coupling.M, FlatTorus)
    fm = FibrationMap(coupling, sigma, R, math.nan, seed, offsets, None if uniform else weights)
    fm.reach = estimate_reach(fm, reach_probes, seed)
    return fm


def fibration_map(fm: FibrationMap, x) -> FibrationPoint:
    """Nearest point of f_N(N) to f_M(x), started from the net point with the largest component."""
    c = fm.coupling
    F, support = evaluate_maps(fm, x)
    if not len(support) or F.max() <= 0:
        raise OutsideReach(f"f_M({x}) vanishes: no net point within sigma + epsilon")
    j = int(np.argmax(F))
    start = c.net_N[j]
    radius = 2 * fm.sigma
    idx = np.union1d(c.tree_N.ball(start, fm.sigma + radius), support)
    target = F[idx]

    def res(y):
        return _fN_parts(fm, y, idx)[0] - target

    def jac(y):
        return _fN_parts(fm, y, idx)[1]

    sol = least_squares(res, start, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    if not sol.success or np.linalg.norm(c.N.chart_diff(start, sol.x)) >= radius:
        raise OptimizerDivergence(f"projection of f_M({x}) left the search ball around net point {j}")
    r = sol.fun
    resid = float(np.linalg.norm(r))
    if resid >= fm.reach:
        raise OutsideReach(f"|f_N(y) - f_M(x)| = {resid:.6g} exceeds the reach estimate {fm.reach:.6g}")
    stat = float(np.linalg.norm(sol.jac.T @ r))
    return FibrationPoint(np.asarray(x, float), c.N.normalize(sol.x), resid, stat, j)


def check_submersion(fm: FibrationMap, x, fd_step: float = 1e-4) -> tuple[float, np.ndarray]:
    """Singular values of the central-difference differential of f in orthonormal frames."""
    c = fm.coupling
    x = c.M.check_point(x)
    E = c.M.frame(x)
    cols = []
    for k in range(2):
        a = fibration_map(fm, x - fd_step * E[:, k]).y
        b = fibration_map(fm, x + fd_step * E[:, k]).y
        cols.append(c.N.chart_diff(a, b) / (2 * fd_step))
    J = c.N.coframe(fibration_map(fm, x).y) @ np.stack(cols, axis=1)
    sv = np.linalg.svd(J, compute_uv=False)
    return float(sv[-1]), sv


def grid_points(M: ManifoldSpec, m: int = 20) -> np.ndarray:
    u = (np.arange(m) + 0.5) / m
    return np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2) @ M.lattice.basis


@dataclass(frozen=True, eq=False)
class GridReport:
    points: np.ndarray
    images: np.ndarray
    displacement: np.ndarray
    min_singular: np.ndarray
    residual: np.ndarray
    stationarity: np.ndarray

    def rows(self):
        fmt = lambda v: " ".join(f"{t:.12g}" for t in v)  # noqa: E731
        for x, y, d, s in zip(self.points, self.images, self.displacement, self.min_singular):
            yield {"x": fmt(x), "f_x": fmt(y), "displacement": float(d), "min_singular_value": float(s)}


def grid_report(fm: FibrationMap, m: int = 20, submersion: bool = True, fd_step: float = 1e-4) -> GridReport:
    c = fm.coupling
    X = grid_points(c.M, m)
    Y, res, stat, sv = [], [], [], []
    for x in X:
        p = fibration_map(fm, x)
        Y.append(p.y)
        res.append(p.residual)
        stat.append(p.stationarity)
        sv.append(check_submersion(fm, x, fd_step)[0] if submersion else math.nan)
    Y = np.array(Y)
    disp = c.dist_N(X, Y)
    return GridReport(X, Y, disp, np.array(sv), np.array(res), np.array(stat))


# ---------------------------------------------------------------------------
# angle transfer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AngleTransfer:
    theta: float
    theta_prime: float
    mu: float
    nu: float
    proximity: float

    @property
    def defect(self) -> float:
        return abs(self.theta - self.mu * self.theta_prime) - (1 - self.mu) * math.pi

    def row(self) -> dict:
        return {"theta": self.theta, "theta_prime": self.theta_prime, "defect": self.defect, "nu": self.nu}


def angle_transfer_report(
    M: ManifoldSpec,
    N: ManifoldSpec,
    coupling: GHCoupling,
    c1: GeodesicPath,
    c2: GeodesicPath,
    c1p: GeodesicPath,
    c2p: GeodesicPath,
    mu: float,
    nu: float,
) -> AngleTransfer:
    """Angles between the initial velocities of (c1, c2) in M and (c1', c2') in N.

    Requires start and end points of c_i and c_i' to be nu-close in the
    coupling metric; the defect |theta - mu theta'| - (1 - mu) pi is reported,
    not judged.
    """
    worst = 0.0
    for a, b in ((c1, c1p), (c2, c2p)):
        for pa, pb in ((a.start, b.start), (a.end, b.end)):
            worst = max(worst, float(coupling.cross_distance(pa, pb)))
    if worst > nu:
        raise HypothesisViolated(f"coupled endpoints are {worst:.6g} apart, not within nu={nu}")
    theta = float(M.angle(c1.start, c1.initial_velocity, c2.initial_velocity))
    theta_p = float(N.angle(c1p.start, c1p.initial_velocity, c2p.initial_velocity))
    return AngleTransfer(theta, theta_p, mu, nu, worst)


def random_angle_transfers(
    coupling: GHCoupling, n_pairs: int, length: float, mu: float, nu: float, seed: int
) -> list[AngleTransfer]:
    """Geodesic pairs of the given length from random points of M, matched by minimal geodesics in N."""
    M, N = coupling.M, coupling.N
    rng = np.random.default_rng(seed)
    P = M.sample_points(rng, n_pairs)
    U1 = random_unit_vectors(M, P, rng)
    U2 = random_unit_vectors(M, P, rng)
    out = []
    for p, u1, u2 in zip(P, U1, U2):
        c1 = integrate_geodesic(M, p, u1, length)
        c2 = integrate_geodesic(M, p, u2, length)
        c1p = minimal_geodesics(N, p, N.normalize(c1.end), method="closed_form")[0]
        c2p = minimal_geodesics(N, p, N.normalize(c2.end), method="closed_form")[0]
        out.append(angle_transfer_report(M, N, coupling, c1, c2, c1p, c2p, mu, nu))
    return out
