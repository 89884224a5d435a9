"""Catalog of chart-based Riemannian manifolds.

All geometric methods are vectorized: a point array of shape ``(..., n)``
yields metrics of shape ``(..., n, n)``, Christoffel symbols ``G[..., k, i, j]
= Gamma^k_ij`` and curvature ``R[..., l, i, j, k] = R^l_ijk`` with the
convention ``R(d_j, d_k) d_i = R^l_ijk d_l``, so that
``<R(X, Y)Y, X>`` is the sectional-curvature numerator.

Every manifold is a single chart (with excluded bands where the chart
degenerates); flat tori keep unwrapped coordinates during integration and
compare points modulo the deck lattice.
"""

from __future__ import annotations

import ast
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gammaln

from .errors import (
    CoordinateSingularity,
    InvalidInput,
    PointOutsideChart,
    UnsupportedManifold,
)
from .lattice import DeckLattice

FD_STEP = 1e-5
POLE_BAND = 1e-3


def sphere_volume(k: int, radius: float = 1.0) -> float:
    """Volume of the round k-sphere S^k of the given radius."""
    return math.exp(math.log(2) + (k + 1) / 2 * math.log(math.pi) - gammaln((k + 1) / 2)) * radius**k


def _inv_sym(g):
    return np.linalg.inv(g)


def christoffel_from_derivs(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^l_ij = 1/2 g^lm (d_i g_mj + d_j g_mi - d_m g_ij); ``dg[..., a, i, j] = d_a g_ij``."""
    a = np.swapaxes(dg, -3, -2) + np.moveaxis(dg, -3, -1) - dg
    return 0.5 * np.einsum("...lm,...mij->...lij", _inv_sym(g), a)


def curvature_from_christoffel(gam: np.ndarray, dgam: np.ndarray) -> np.ndarray:
    """Riemann tensor from Gamma and ``dgam[..., a, l, i, j] = d_a Gamma^l_ij``."""
    r = np.einsum("...jlik->...lijk", dgam) - np.einsum("...klij->...lijk", dgam)
    r = r + np.einsum("...ljm,...mki->...lijk", gam, gam)
    r = r - np.einsum("...lkm,...mji->...lijk", gam, gam)
    return r


def constant_curvature_tensor(g: np.ndarray, kappa) -> np.ndarray:
    """R^l_ijk = K (delta^l_j g_ik - delta^l_k g_ij), K possibly pointwise."""
    n = g.shape[-1]
    eye = np.eye(n)
    r = np.einsum("lj,...ik->...lijk", eye, g) - np.einsum("lk,...ij->...lijk", eye, g)
    return np.asarray(kappa)[..., None, None, None, None] * r


def _conformal_christoffel(dphi: np.ndarray) -> np.ndarray:
    """Christoffels of e^{2 phi} delta: d_j phi delta_ki + d_i phi delta_kj - d_k phi delta_ij."""
    n = dphi.shape[-1]
    eye = np.eye(n)
    return (
        np.einsum("ki,...j->...kij", eye, dphi)
        + np.einsum("kj,...i->...kij", eye, dphi)
        - np.einsum("ij,...k->...kij", eye, dphi)
    )


def _conformal_acc(dphi: np.ndarray, v: np.ndarray) -> np.ndarray:
    dv = np.einsum("...i,...i->...", dphi, v)[..., None]
    vv = np.einsum("...i,...i->...", v, v)[..., None]
    return -(2 * dv * v - vv * dphi)


def _diagonal_christoffel(h: np.ndarray, dh: np.ndarray) -> np.ndarray:
    """Christoffels of diag(h); ``dh[..., a, k] = d_a h_k``."""
    n = h.shape[-1]
    eye = np.eye(n)
    gam = (
        np.einsum("kj,...ik->...kij", eye, dh)
        + np.einsum("ki,...jk->...kij", eye, dh)
        - np.einsum("ij,...ki->...kij", eye, dh)
    )
    return gam / (2 * h)[..., :, None, None]


class ManifoldSpec:
    """Base class; subclasses supply the metric and whatever closed forms exist."""

    kind: str = "abstract"
    dim: int
    closed_form: bool = False
    compact: bool = False

    # ---- chart handling -------------------------------------------------
    def chart_margin(self, x: np.ndarray) -> np.ndarray:
        """Positive inside the admissible chart region, <= 0 outside."""
        return np.ones(np.shape(x)[:-1])

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise PointOutsideChart(f"expected {self.dim} coordinates, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise PointOutsideChart(f"non-finite coordinates {x}")
        if np.any(self.chart_margin(x) <= 0):
            raise self._chart_error(x)
        return x

    def _chart_error(self, x):
        return PointOutsideChart(f"{x} outside the chart of {self.id}")

    def chart_diff(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Chart displacement from x to the representative of y nearest to x."""
        return np.asarray(y, dtype=float) - np.asarray(x, dtype=float)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)

    # ---- metric quantities ---------------------------------------------
    def metric(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric_derivs(self, x: np.ndarray) -> np.ndarray:
        return self._fd(self.metric, x)

    def christoffel(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return christoffel_from_derivs(self.metric(x), self.metric_derivs(x))

    def christoffel_fd(self, x: np.ndarray) -> np.ndarray:
        """Christoffels from central differences of the metric (fallback path)."""
        x = np.asarray(x, dtype=float)
        return christoffel_from_derivs(self.metric(x), self._fd(self.metric, x))

    def curvature(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return curvature_from_christoffel(self.christoffel(x), self._fd(self.christoffel, x))

    def geodesic_acc(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Right-hand side -Gamma^k_ij v^i v^j of the geodesic equation."""
        gam = self.christoffel(x)
        return -np.einsum("...kj,...j->...k", np.einsum("...kij,...i->...kj", gam, v), v)

    def curvature_fd(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return curvature_from_christoffel(self.christoffel(x), self._fd(self.christoffel, x))

    def _fd(self, fn: Callable, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        parts = []
        for a in range(self.dim):
            e = np.zeros(self.dim)
            e[a] = h
            parts.append((fn(x + e) - fn(x - e)) / (2 * h))
        return np.stack(parts, axis=x.ndim - 1)

    def volume_density(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.metric(x)))

    # ---- closed forms (space forms only) --------------------------------
    def distance(self, p, q) -> np.ndarray:
        raise UnsupportedManifold(f"no closed-form distance on {self.id}")

    def exp(self, p, w) -> np.ndarray:
        pts, _ = self.geodesic_closed(p, w, np.array([1.0]))
        return pts[..., -1, :]

    def geodesic_closed(self, p, w, s) -> tuple[np.ndarray, np.ndarray]:
        """Points and chart velocities (w.r.t. s) of s -> exp_p(s w), s in [0, 1]."""
        raise UnsupportedManifold(f"no closed-form geodesics on {self.id}")

    def log_all(self, p, q, tol_extra: float = 0.0, n_directions: int | None = None) -> list[np.ndarray]:
        """Chart velocities w with exp_p(w) = q for all near-minimal connections."""
        raise UnsupportedManifold(f"no closed-form logarithm on {self.id}")

    # ---- sampling --------------------------------------------------------
    def sample_points(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Volume-uniform samples for compact manifolds, chart-uniform in a reference region otherwise."""
        lo, hi = self.sampling_box()
        bound = self.density_bound()
        out = []
        got = 0
        while got < size:
            m = max(2 * (size - got), 16)
            x = lo + (hi - lo) * rng.random((m, self.dim))
            ok = self.chart_margin(x) > 0
            if bound is not None:
                ok &= rng.random(m) * bound <= self.volume_density(x)
            x = x[ok]
            out.append(x)
            got += len(x)
        return np.concatenate(out)[:size]

    def sampling_box(self) -> tuple[np.ndarray, np.ndarray]:
        return -np.ones(self.dim), np.ones(self.dim)

    def density_bound(self) -> float | None:
        return None

    # ---- helpers ---------------------------------------------------------
    def inner(self, x, u, v) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", u, self.metric(x), v)

    def norm(self, x, u) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, u, u), 0.0))

    def angle(self, x, u, v) -> np.ndarray:
        """Angle between tangent vectors at x, via atan2 for conditioning near 0 and pi."""
        g = self.metric(x)
        uu = np.einsum("...i,...ij,...j->...", u, g, u)
        vv = np.einsum("...i,...ij,...j->...", v, g, v)
        uv = np.einsum("...i,...ij,...j->...", u, g, v)
        cross = np.sqrt(np.maximum(uu * vv - uv**2, 0.0))
        return np.arctan2(cross, uv)

    def frame(self, x) -> np.ndarray:
        """Columns form a g-orthonormal basis at x (inverse symmetric square root of g)."""
        g = self.metric(np.asarray(x, dtype=float))
        w, v = np.linalg.eigh(g)
        return np.einsum("...ij,...j,...kj->...ik", v, 1 / np.sqrt(w), v)

    def coframe(self, x) -> np.ndarray:
        """Symmetric square root of g: maps chart vectors to orthonormal components."""
        g = self.metric(np.asarray(x, dtype=float))
        w, v = np.linalg.eigh(g)
        return np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(w), v)

    @property
    def id(self) -> str:
        raise NotImplementedError

    def __str__(self):
        return self.id


def _fmt(x) -> str:
    return repr(float(x)).rstrip("0").rstrip(".") if float(x) != int(x) else str(int(x))


# ---------------------------------------------------------------------------
# Model spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Euclidean(ManifoldSpec):
    dim: int = 2
    kind = "euclidean"
    closed_form = True

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidInput("dim must be >= 2")

    @property
    def id(self):
        return f"euclidean:n={self.dim}"

    @property
    def curvature_param(self):
        return 0.0

    def metric(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def metric_derivs(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def christoffel(self, x):
        return self.metric_derivs(x)

    def geodesic_acc(self, x, v):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(v)))

    def curvature(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def distance(self, p, q):
        return np.linalg.norm(np.asarray(q, float) - np.asarray(p, float), axis=-1)

    def geodesic_closed(self, p, w, s):
        p, w, s = np.asarray(p, float), np.asarray(w, float), np.asarray(s, float)
        pts = p[..., None, :] + s[:, None] * w[..., None, :]
        return pts, np.broadcast_to(w[..., None, :], pts.shape).copy()

    def log_all(self, p, q, tol_extra=0.0, n_directions=None):
        d = np.asarray(q, float) - np.asarray(p, float)
        return [d] if np.linalg.norm(d) > 0 else []


@dataclass(frozen=True, eq=False)
class FlatTorus(ManifoldSpec):
    lattice: DeckLattice = field(default_factory=lambda: DeckLattice(np.eye(2)))
    kind = "flat_torus"
    closed_form = True
    compact = True

    def __post_init__(self):
        if not isinstance(self.lattice, DeckLattice):
            object.__setattr__(self, "lattice", DeckLattice(self.lattice))
        if self.lattice.dim < 2:
            raise InvalidInput("dim must be >= 2")

    @property
    def dim(self):
        return self.lattice.dim

    @property
    def curvature_param(self):
        return 0.0

    @property
    def id(self):
        return "torus:basis=" + str([[_num(v) for v in row] for row in self.lattice.basis.tolist()]).replace(" ", "")

    @property
    def injectivity_radius(self) -> float:
        return 0.5 * min(np.linalg.norm(self.lattice.voronoi_relevant, axis=1))

    metric = Euclidean.metric
    metric_derivs = Euclidean.metric_derivs
    christoffel = Euclidean.christoffel
    geodesic_acc = Euclidean.geodesic_acc
    curvature = Euclidean.curvature
    geodesic_closed = Euclidean.geodesic_closed

    def chart_diff(self, x, y):
        return self.lattice.reduce(np.asarray(y, float) - np.asarray(x, float))

    def normalize(self, x):
        x = np.asarray(x, float)
        c = x @ self.lattice.inverse
        return (c - np.floor(c + 1e-12)) @ self.lattice.basis

    def distance(self, p, q):
        return np.linalg.norm(self.chart_diff(p, q), axis=-1)

    def log_all(self, p, q, tol_extra=0.0, n_directions=None):
        d = np.asarray(q, float) - np.asarray(p, float)
        dmin = float(np.linalg.norm(self.lattice.reduce(d)))
        if dmin == 0:
            return []
        _, vecs, _ = self.lattice.translates_within(d, dmin * (1 + tol_extra) + 1e-12)
        return [v for v in vecs]

    def sampling_box(self):
        return np.zeros(self.dim), np.ones(self.dim)

    def sample_points(self, rng, size):
        return rng.random((size, self.dim)) @ self.lattice.basis


def _num(v):
    return int(v) if float(v).is_integer() else float(v)


def _fibonacci_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, nearly uniform unit vectors on S^{n-1}."""
    golden = (1 + 5**0.5) / 2
    if n == 2:
        ang = 2 * np.pi * (np.arange(count) + 1 / golden) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        r = np.sqrt(1 - z**2)
        ang = 2 * np.pi * i / golden
        return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=1)
    from scipy.stats import norm as _norm
    from scipy.stats import qmc

    u = qmc.Halton(d=n, scramble=False).random(count + 1)[1:]
    v = _norm.ppf(np.clip(u, 1e-9, 1 - 1e-9))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class Sphere(ManifoldSpec):
    """Round sphere of curvature K in hyperspherical coordinates (theta_1..theta_{n-1}, phi).

    The embedding is X_0 = R cos th_1, X_1 = R sin th_1 cos th_2, ...,
    X_{n-1} = R sin th_1 ... sin th_{n-1} cos phi, X_n = ... sin phi.
    """

    dim: int = 2
    K: float = 1.0
    band: float = POLE_BAND
    kind = "sphere"
    closed_form = True
    compact = True

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidInput("dim must be >= 2")
        if not self.K > 0:
            raise InvalidInput("sphere requires curvature_param > 0")

    @property
    def radius(self):
        return 1 / math.sqrt(self.K)

    @property
    def curvature_param(self):
        return self.K

    @property
    def id(self):
        return f"sphere:n={self.dim},K={_fmt(self.K)}"

    def chart_margin(self, x):
        x = np.asarray(x, float)
        th = x[..., :-1]
        return np.min(np.minimum(th, np.pi - th), axis=-1) - self.band

    def _chart_error(self, x):
        return CoordinateSingularity(f"{x} inside the pole-exclusion band of {self.id}")

    def chart_diff(self, x, y):
        d = np.asarray(y, float) - np.asarray(x, float)
        d[..., -1] = (d[..., -1] + np.pi) % (2 * np.pi) - np.pi
        return d

    def normalize(self, x):
        x = np.array(x, dtype=float)
        x[..., -1] = (x[..., -1] + np.pi) % (2 * np.pi) - np.pi
        return x

    def _h(self, x):
        s2 = np.sin(x[..., :-1]) ** 2
        prods = np.concatenate([np.ones(x.shape[:-1] + (1,)), np.cumprod(s2, axis=-1)], axis=-1)
        return prods / self.K

    def metric(self, x):
        x = np.asarray(x, float)
        h = self._h(x)
        return h[..., :, None] * np.eye(self.dim)

    def _dh(self, x):
        n = self.dim
        h = self._h(x)
        th = x[..., :-1]
        cot = np.concatenate([np.cos(th) / np.sin(th), np.zeros(x.shape[:-1] + (1,))], axis=-1)
        return 2 * cot[..., :, None] * h[..., None, :] * np.triu(np.ones((n, n)), 1)

    def metric_derivs(self, x):
        x = np.asarray(x, float)
        dh = self._dh(x)
        return dh[..., :, :, None] * np.eye(self.dim)

    def christoffel(self, x):
        x = np.asarray(x, float)
        return _diagonal_christoffel(self._h(x), self._dh(x))

    def geodesic_acc(self, x, v):
        x = np.asarray(x, float)
        th = x[..., :-1]
        cot = np.cos(th) / np.sin(th)
        h = self._h(x)
        lead = np.cumsum(v[..., :-1] * cot, axis=-1)
        acc = -2 * v * np.concatenate([np.zeros(x.shape[:-1] + (1,)), lead], axis=-1)
        w = v * v * h
        tail = np.sum(w, axis=-1, keepdims=True) - np.cumsum(w, axis=-1)
        acc[..., :-1] += cot * tail[..., :-1] / h[..., :-1]
        return acc

    def curvature(self, x):
        return constant_curvature_tensor(self.metric(x), self.K)

    # ---- embedding ------------------------------------------------------
    def embed(self, x):
        x = np.asarray(x, float)
        n = self.dim
        s, c = np.sin(x), np.cos(x)
        out = np.empty(x.shape[:-1] + (n + 1,))
        prod = np.ones(x.shape[:-1])
        for k in range(n - 1):
            out[..., k] = prod * c[..., k]
            prod = prod * s[..., k]
        out[..., n - 1] = prod * c[..., -1]
        out[..., n] = prod * s[..., -1]
        return self.radius * out

    def chart(self, X):
        X = np.asarray(X, float) / self.radius
        n = self.dim
        out = np.empty(X.shape[:-1] + (n,))
        for k in range(n - 1):
            out[..., k] = np.arctan2(np.linalg.norm(X[..., k + 1 :], axis=-1), X[..., k])
        out[..., -1] = np.arctan2(X[..., n], X[..., n - 1])
        return out

    def embed_jacobian(self, x):
        """J[..., a, j] = dX_a / dx_j."""
        x = np.asarray(x, float)
        n = self.dim
        s, c = np.sin(x), np.cos(x)
        J = np.zeros(x.shape[:-1] + (n + 1, n))
        # X_a = R * prod_{m<a} s_m * c_a  (a < n-1);  X_{n-1}, X_n use phi.
        for a in range(n + 1):
            last = min(a, n - 1)
            for j in range(n):
                if j > last:
                    continue
                term = np.ones(x.shape[:-1])
                for m in range(last):
                    term = term * (c[..., m] if m == j else s[..., m])
                if a < n - 1:
                    term = term * (-s[..., a] if j == a else c[..., a])
                elif a == n - 1:
                    term = term * (-s[..., -1] if j == n - 1 else c[..., -1])
                else:
                    term = term * (c[..., -1] if j == n - 1 else s[..., -1])
                J[..., a, j] = term
        return self.radius * J

    def _to_chart_velocity(self, x, V):
        J = self.embed_jacobian(x)
        g = np.einsum("...ai,...aj->...ij", J, J)
        return np.linalg.solve(g, np.einsum("...ai,...a->...i", J, V)[..., None])[..., 0]

    def distance(self, p, q):
        a, b = self.embed(p) / self.radius, self.embed(q) / self.radius
        return self.radius * 2 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))

    def geodesic_closed(self, p, w, s):
        p, w, s = np.asarray(p, float), np.asarray(w, float), np.asarray(s, float)
        R = self.radius
        X0 = self.embed(p) / R
        V = np.einsum("...ai,...i->...a", self.embed_jacobian(p), w) / R
        ell = np.linalg.norm(V, axis=-1)[..., None]
        safe = np.where(ell > 0, ell, 1.0)
        U = V / safe
        ang = s[:, None] * ell[..., None, :]
        X = np.cos(ang) * X0[..., None, :] + np.sin(ang) * U[..., None, :]
        dX = ell[..., None, :] * (-np.sin(ang) * X0[..., None, :] + np.cos(ang) * U[..., None, :])
        pts = self.chart(R * X)
        pts[..., -1] = np.unwrap(pts[..., -1], axis=-1)
        pts[..., -1] += np.round((p[..., None, -1] - pts[..., :1, -1]) / (2 * np.pi)) * 2 * np.pi
        vel = self._to_chart_velocity(pts, R * dX)
        return pts, vel

    def log_all(self, p, q, tol_extra=0.0, n_directions=None):
        p, q = np.asarray(p, float), np.asarray(q, float)
        R = self.radius
        X, Y = self.embed(p) / R, self.embed(q) / R
        omega = float(2 * np.arctan2(np.linalg.norm(X - Y), np.linalg.norm(X + Y)))
        if omega == 0:
            return []
        n = self.dim
        if np.pi - omega < 1e-7:
            count = n_directions or 2 * n * n
            F = self.frame(p)
            return [np.pi * R * (F @ u) for u in _fibonacci_directions(n, count)]
        U = Y - np.dot(X, Y) * X
        U /= np.linalg.norm(U)
        out = [self._to_chart_velocity(p, R * omega * U)]
        if 2 * np.pi - omega <= omega * (1 + tol_extra):
            out.append(self._to_chart_velocity(p, -R * (2 * np.pi - omega) * U))
        return out

    def sampling_box(self):
        lo = np.zeros(self.dim)
        hi = np.full(self.dim, np.pi)
        lo[-1], hi[-1] = -np.pi, np.pi
        return lo, hi

    def sample_points(self, rng, size):
        out = []
        got = 0
        while got < size:
            v = rng.standard_normal((2 * (size - got) + 4, self.dim + 1))
            x = self.chart(self.radius * v / np.linalg.norm(v, axis=1, keepdims=True))
            x = x[self.chart_margin(x) > 0]
            out.append(x)
            got += len(x)
        return np.concatenate(out)[:size]


@dataclass(frozen=True, eq=False)
class Hyperbolic(ManifoldSpec):
    """Hyperbolic space of curvature K < 0 in the Poincare ball chart."""

    dim: int = 2
    K: float = -1.0
    kind = "hyperbolic"
    closed_form = True

    def __post_init__(self):
        if self.dim < 2:
            raise InvalidInput("dim must be >= 2")
        if not self.K < 0:
            raise InvalidInput("hyperbolic requires curvature_param < 0")

    @property
    def radius(self):
        return 1 / math.sqrt(-self.K)

    @property
    def curvature_param(self):
        return self.K

    @property
    def id(self):
        return f"hyperbolic:n={self.dim},K={_fmt(self.K)}"

    def chart_margin(self, x):
        return 1 - np.linalg.norm(np.asarray(x, float), axis=-1) - 1e-12

    def _lam(self, x):
        return 2 * self.radius / (1 - np.einsum("...i,...i->...", x, x))

    def metric(self, x):
        x = np.asarray(x, float)
        return (self._lam(x) ** 2)[..., None, None] * np.eye(self.dim)

    def christoffel(self, x):
        x = np.asarray(x, float)
        dphi = 2 * x / (1 - np.einsum("...i,...i->...", x, x))[..., None]
        return _conformal_christoffel(dphi)

    def geodesic_acc(self, x, v):
        x = np.asarray(x, float)
        dphi = 2 * x / (1 - np.einsum("...i,...i->...", x, x))[..., None]
        return _conformal_acc(dphi, v)

    def metric_derivs(self, x):
        x = np.asarray(x, float)
        r2 = np.einsum("...i,...i->...", x, x)
        lam2 = (2 * self.radius / (1 - r2)) ** 2
        d = (lam2 * 2 / (1 - r2))[..., None] * 2 * x  # d_a lam^2
        return d[..., :, None, None] * np.eye(self.dim)

    def curvature(self, x):
        return constant_curvature_tensor(self.metric(x), self.K)

    def to_hyperboloid(self, x):
        x = np.asarray(x, float)
        r2 = np.einsum("...i,...i->...", x, x)[..., None]
        return np.concatenate([(1 + r2), 2 * x], axis=-1) / (1 - r2)

    def from_hyperboloid(self, y):
        return y[..., 1:] / (1 + y[..., :1])

    def _tangent_map(self, x):
        """d(hyperboloid)/dx as a (n+1) x n matrix."""
        x = np.asarray(x, float)
        r2 = np.einsum("...i,...i->...", x, x)[..., None, None]
        top = 4 * x[..., None, :] / (1 - r2) ** 2
        body = 2 * np.eye(self.dim) / (1 - r2) + 4 * x[..., :, None] * x[..., None, :] / (1 - r2) ** 2
        return np.concatenate([top, body], axis=-2)

    @staticmethod
    def _mink(a, b):
        return -a[..., 0] * b[..., 0] + np.einsum("...i,...i->...", a[..., 1:], b[..., 1:])

    def distance(self, p, q):
        p, q = np.asarray(p, float), np.asarray(q, float)
        num = 2 * np.sum((p - q) ** 2, axis=-1)
        den = (1 - np.sum(p * p, axis=-1)) * (1 - np.sum(q * q, axis=-1))
        return self.radius * np.arccosh(1 + num / den)

    def geodesic_closed(self, p, w, s):
        p, w, s = np.asarray(p, float), np.asarray(w, float), np.asarray(s, float)
        Y0 = self.to_hyperboloid(p)
        V = np.einsum("...ai,...i->...a", self._tangent_map(p), w)
        ell = np.sqrt(np.maximum(self._mink(V, V), 0.0))[..., None]
        U = V / np.where(ell > 0, ell, 1.0)
        a = s[:, None] * ell[..., None, :]
        Y = np.cosh(a) * Y0[..., None, :] + np.sinh(a) * U[..., None, :]
        dY = ell[..., None, :] * (np.sinh(a) * Y0[..., None, :] + np.cosh(a) * U[..., None, :])
        pts = self.from_hyperboloid(Y)
        vel = dY[..., 1:] / (1 + Y[..., :1]) - Y[..., 1:] * dY[..., :1] / (1 + Y[..., :1]) ** 2
        return pts, vel

    def log_all(self, p, q, tol_extra=0.0, n_directions=None):
        p, q = np.asarray(p, float), np.asarray(q, float)
        X, Y = self.to_hyperboloid(p), self.to_hyperboloid(q)
        c = -self._mink(X, Y)
        omega = float(np.arccosh(max(c, 1.0)))
        if omega == 0:
            return []
        V = Y - c * X
        V = V / math.sqrt(self._mink(V, V)) * omega
        T = self._tangent_map(p)
        w, *_ = np.linalg.lstsq(T, V, rcond=None)
        return [w]

    def sampling_box(self):
        return -0.5 * np.ones(self.dim), 0.5 * np.ones(self.dim)


# ---------------------------------------------------------------------------
# Surfaces given by an embedding in R^3
# ---------------------------------------------------------------------------


class EmbeddedSurface(ManifoldSpec):
    """Surface X(u, phi) in R^3 with u in (u_lo, u_hi) and phi periodic.

    Subclasses implement ``_embed_derivs`` returning X, X_i and X_ij.
    """

    dim = 2
    compact = True
    u_range = (0.0, np.pi)
    band = POLE_BAND

    def _embed_derivs(self, x):
        raise NotImplementedError

    def chart_margin(self, x):
        u = np.asarray(x, float)[..., 0]
        lo, hi = self.u_range
        return np.minimum(u - lo, hi - u) - self.band

    def _chart_error(self, x):
        return CoordinateSingularity(f"{x} inside the pole-exclusion band of {self.id}")

    chart_diff = Sphere.chart_diff
    normalize = Sphere.normalize

    def embed(self, x):
        return self._embed_derivs(np.asarray(x, float))[0]

    def metric(self, x):
        _, d1, _ = self._embed_derivs(np.asarray(x, float))
        return np.einsum("...ai,...aj->...ij", d1, d1)

    def christoffel(self, x):
        _, d1, d2 = self._embed_derivs(np.asarray(x, float))
        g = np.einsum("...ai,...aj->...ij", d1, d1)
        proj = np.einsum("...aij,...al->...lij", d2, d1)
        return np.einsum("...kl,...lij->...kij", np.linalg.inv(g), proj)

    def metric_derivs(self, x):
        _, d1, d2 = self._embed_derivs(np.asarray(x, float))
        t = np.einsum("...aki,...aj->...kij", d2, d1)
        return t + np.swapaxes(t, -1, -2)

    def gauss_curvature(self, x):
        _, d1, d2 = self._embed_derivs(np.asarray(x, float))
        nrm = np.cross(d1[..., 0], d1[..., 1])
        nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        L = np.einsum("...aij,...a->...ij", d2, nrm)
        g = np.einsum("...ai,...aj->...ij", d1, d1)
        return np.linalg.det(L) / np.linalg.det(g)

    def curvature(self, x):
        x = np.asarray(x, float)
        return constant_curvature_tensor(self.metric(x), self.gauss_curvature(x))

    def sampling_box(self):
        return np.array([self.u_range[0], -np.pi]), np.array([self.u_range[1], np.pi])

    @cached_property
    def _density_bound(self):
        lo, hi = self.sampling_box()
        u = np.linspace(lo[0], hi[0], 801)[1:-1]
        grid = np.stack(np.meshgrid(u, np.linspace(-np.pi, np.pi, 181), indexing="ij"), axis=-1)
        return 1.05 * float(np.max(self.volume_density(grid)))

    def density_bound(self):
        return self._density_bound


@dataclass(frozen=True, eq=False)
class Ellipsoid(EmbeddedSurface):
    """Ellipsoid (a sin t cos p, b sin t sin p, c cos t)."""

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    kind = "ellipsoid"

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise InvalidInput("ellipsoid semi-axes must be positive")

    @property
    def id(self):
        return f"ellipsoid:a={_fmt(self.a)},b={_fmt(self.b)},c={_fmt(self.c)}"

    def _embed_derivs(self, x):
        t, p = x[..., 0], x[..., 1]
        st, ct, sp, cp = np.sin(t), np.cos(t), np.sin(p), np.cos(p)
        a, b, c = self.a, self.b, self.c
        z = np.zeros_like(t)
        X = np.stack([a * st * cp, b * st * sp, c * ct], axis=-1)
        Xt = np.stack([a * ct * cp, b * ct * sp, -c * st], axis=-1)
        Xp = np.stack([-a * st * sp, b * st * cp, z], axis=-1)
        Xtt = np.stack([-a * st * cp, -b * st * sp, -c * ct], axis=-1)
        Xtp = np.stack([-a * ct * sp, b * ct * cp, z], axis=-1)
        Xpp = np.stack([-a * st * cp, -b * st * sp, z], axis=-1)
        d1 = np.stack([Xt, Xp], axis=-1)
        d2 = np.stack([np.stack([Xtt, Xtp], axis=-1), np.stack([Xtp, Xpp], axis=-1)], axis=-1)
        return X, d1, d2

    def chart(self, X):
        X = np.asarray(X, float)
        u = X / np.array([self.a, self.b, self.c])
        return np.stack([np.arctan2(np.hypot(u[..., 0], u[..., 1]), u[..., 2]), np.arctan2(u[..., 1], u[..., 0])], axis=-1)

    def _ambient_acc(self, X, V):
        inv2 = 1.0 / np.array([self.a, self.b, self.c]) ** 2
        grad = X * inv2
        mu = np.einsum("...a,...a->...", V * V, inv2) / np.einsum("...a,...a->...", grad, grad)
        return -mu[..., None] * grad

    def _project(self, X):
        inv2 = 1.0 / np.array([self.a, self.b, self.c]) ** 2
        return X / np.sqrt(np.einsum("...a,...a->...", X * X, inv2))[..., None]

    def ambient_shoot(self, P, W, steps, keep=False):
        """Fixed-step RK4 of the constrained flow in R^3; unlike the chart flow it passes the poles."""
        _, d1, _ = self._embed_derivs(P)
        X, V = self.embed(P), np.einsum("...ai,...i->...a", d1, W)
        h = 1.0 / steps
        acc = self._ambient_acc
        tx, tv = [X], [V]
        err = np.seterr(all="ignore")
        for _ in range(steps):
            k1x, k1v = V, acc(X, V)
            k2x, k2v = V + 0.5 * h * k1v, acc(X + 0.5 * h * k1x, V + 0.5 * h * k1v)
            k3x, k3v = V + 0.5 * h * k2v, acc(X + 0.5 * h * k2x, V + 0.5 * h * k2v)
            k4x, k4v = V + h * k3v, acc(X + h * k3x, V + h * k3v)
            X = self._project(X + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x))
            V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if keep:
                tx.append(X)
                tv.append(V)

        np.seterr(**err)

        def to_chart(X, V):
            ok = np.isfinite(X).all(axis=-1) & np.isfinite(V).all(axis=-1)
            x = np.full(X.shape[:-1] + (2,), np.nan)
            v = np.full_like(x, np.nan)
            x[ok] = self.chart(X[ok])
            _, d1, _ = self._embed_derivs(x[ok])
            v[ok] = np.einsum("...ia,...a->...i", np.linalg.pinv(d1), V[ok])
            return x, v

        x1, v1 = to_chart(X, V)
        if not keep:
            return x1, v1
        cx, cv = to_chart(np.array(tx), np.array(tv))
        return x1, v1, cx, cv


@dataclass(frozen=True, eq=False)
class SurfaceOfRevolution(EmbeddedSurface):
    """Surface (r(t) cos p, r(t) sin p, z(t)) from a sampled profile, t in [0, T].

    The profile is interpolated by cubic splines; r must vanish only at the
    end points (the poles).
    """

    t_samples: tuple = ()
    r_samples: tuple = ()
    z_samples: tuple = ()
    label: str = ""
    kind = "surface_of_revolution"

    def __post_init__(self):
        t = np.asarray(self.t_samples, float)
        r = np.asarray(self.r_samples, float)
        if len(t) < 4 or len(t) != len(r) or len(t) != len(self.z_samples):
            raise InvalidInput("profile needs >= 4 matching samples of t, r, z")
        if np.any(r[1:-1] <= 0):
            raise InvalidInput("profile radius must be positive away from the poles")

    @classmethod
    def bulged(cls, bulge: float, samples: int = 129) -> SurfaceOfRevolution:
        """Unit sphere profile with radius multiplied by (1 + bulge sin^2 t)."""
        t = np.linspace(0, np.pi, samples)
        r = np.sin(t) * (1 + bulge * np.sin(t) ** 2)
        z = -np.cos(t)
        return cls(tuple(t), tuple(r), tuple(z), label=f"bulge={_fmt(bulge)}")

    @property
    def id(self):
        return f"revolution:{self.label}" if self.label else "revolution:profile"

    @property
    def u_range(self):
        return (self.t_samples[0], self.t_samples[-1])

    @cached_property
    def _splines(self):
        r = CubicSpline(self.t_samples, self.r_samples)
        z = CubicSpline(self.t_samples, self.z_samples)
        return r, r.derivative(), r.derivative(2), z, z.derivative(), z.derivative(2)

    def _embed_derivs(self, x):
        t, p = x[..., 0], x[..., 1]
        r, dr, ddr, z, dz, ddz = (f(t) for f in self._splines)
        sp, cp = np.sin(p), np.cos(p)
        zero = np.zeros_like(t)
        X = np.stack([r * cp, r * sp, z], axis=-1)
        Xt = np.stack([dr * cp, dr * sp, dz], axis=-1)
        Xp = np.stack([-r * sp, r * cp, zero], axis=-1)
        Xtt = np.stack([ddr * cp, ddr * sp, ddz], axis=-1)
        Xtp = np.stack([-dr * sp, dr * cp, zero], axis=-1)
        Xpp = np.stack([-r * cp, -r * sp, zero], axis=-1)
        d1 = np.stack([Xt, Xp], axis=-1)
        d2 = np.stack([np.stack([Xtt, Xtp], axis=-1), np.stack([Xtp, Xpp], axis=-1)], axis=-1)
        return X, d1, d2


# ---------------------------------------------------------------------------
# Conformally perturbed flat torus and the scaling wrapper
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConformalTorus(ManifoldSpec):
    """Flat 2-torus with metric (1 + amp sin(2 pi <wave, x>)) (dx^2 + dy^2)."""

    lattice: DeckLattice = field(default_factory=lambda: DeckLattice(np.eye(2)))
    amp: float = 0.05
    wave: tuple = (1.0, 0.0)
    kind = "conformal_torus"
    compact = True

    def __post_init__(self):
        if not isinstance(self.lattice, DeckLattice):
            object.__setattr__(self, "lattice", DeckLattice(self.lattice))
        if self.lattice.dim != 2:
            raise InvalidInput("conformal torus is two-dimensional")
        if not 0 <= self.amp < 1:
            raise InvalidInput("amplitude must lie in [0, 1)")
        phase = self.lattice.basis @ np.asarray(self.wave, float)
        if not np.allclose(phase, np.round(phase), atol=1e-12):
            raise InvalidInput("wave vector must pair integrally with the lattice")

    dim = 2

    @property
    def id(self):
        basis = str([[_num(v) for v in row] for row in self.lattice.basis.tolist()]).replace(" ", "")
        return f"ctorus:amp={_fmt(self.amp)},basis={basis}"

    chart_diff = FlatTorus.chart_diff
    normalize = FlatTorus.normalize

    def _phase(self, x):
        return 2 * np.pi * np.einsum("...i,i->...", np.asarray(x, float), np.asarray(self.wave, float))

    def conformal_factor(self, x):
        return 1 + self.amp * np.sin(self._phase(x))

    def metric(self, x):
        return self.conformal_factor(x)[..., None, None] * np.eye(2)

    def metric_derivs(self, x):
        d = (2 * np.pi * self.amp * np.cos(self._phase(x)))[..., None] * np.asarray(self.wave, float)
        return d[..., :, None, None] * np.eye(2)

    def christoffel(self, x):
        lam = self.conformal_factor(x)
        dlam = (2 * np.pi * self.amp * np.cos(self._phase(x)))[..., None] * np.asarray(self.wave, float)
        return _conformal_christoffel(0.5 * dlam / lam[..., None])

    def geodesic_acc(self, x, v):
        lam = self.conformal_factor(x)
        dlam = (2 * np.pi * self.amp * np.cos(self._phase(x)))[..., None] * np.asarray(self.wave, float)
        return _conformal_acc(0.5 * dlam / lam[..., None], v)

    def gauss_curvature(self, x):
        s = self._phase(x)
        lam = 1 + self.amp * np.sin(s)
        w2 = (2 * np.pi) ** 2 * float(np.dot(self.wave, self.wave))
        d1 = self.amp * np.cos(s)
        d2 = -self.amp * np.sin(s)
        phi2 = 0.5 * (d2 / lam - (d1 / lam) ** 2) * w2
        return -phi2 / lam

    def curvature(self, x):
        x = np.asarray(x, float)
        return constant_curvature_tensor(self.metric(x), self.gauss_curvature(x))

    def sampling_box(self):
        return np.zeros(2), np.ones(2)

    def sample_points(self, rng, size):
        out, got = [], 0
        while got < size:
            m = 2 * (size - got) + 4
            u = rng.random((m, 2))
            x = u @ self.lattice.basis
            keep = rng.random(m) * (1 + self.amp) <= self.conformal_factor(x)
            out.append(x[keep])
            got += int(keep.sum())
        return np.concatenate(out)[:size]


@dataclass(frozen=True, eq=False)
class Scaled(ManifoldSpec):
    """The manifold ``base`` with metric multiplied by c^2.

    Geodesics keep their chart trajectories; lengths scale by c and angles
    are unchanged.
    """

    base: ManifoldSpec = field(default_factory=Euclidean)
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise InvalidInput("scale factor must be positive")

    @property
    def kind(self):
        return self.base.kind

    @property
    def dim(self):
        return self.base.dim

    @property
    def closed_form(self):
        return self.base.closed_form

    @property
    def compact(self):
        return self.base.compact

    @property
    def curvature_param(self):
        return getattr(self.base, "curvature_param", float("nan")) / self.c**2

    @property
    def id(self):
        return f"scaled:c={_fmt(self.c)};{self.base.id}"

    def chart_margin(self, x):
        return self.base.chart_margin(x)

    def _chart_error(self, x):
        return self.base._chart_error(x)

    def chart_diff(self, x, y):
        return self.base.chart_diff(x, y)

    def normalize(self, x):
        return self.base.normalize(x)

    def metric(self, x):
        return self.c**2 * self.base.metric(x)

    def metric_derivs(self, x):
        return self.c**2 * self.base.metric_derivs(x)

    def christoffel(self, x):
        return self.base.christoffel(x)

    def geodesic_acc(self, x, v):
        return self.base.geodesic_acc(x, v)

    def curvature(self, x):
        return self.base.curvature(x)

    def distance(self, p, q):
        return self.c * self.base.distance(p, q)

    def geodesic_closed(self, p, w, s):
        return self.base.geodesic_closed(p, w, s)

    def log_all(self, p, q, tol_extra=0.0, n_directions=None):
        return self.base.log_all(p, q, tol_extra, n_directions)

    def sample_points(self, rng, size):
        return self.base.sample_points(rng, size)

    def sampling_box(self):
        return self.base.sampling_box()

    def __getattr__(self, name):
        if name in ("injectivity_radius", "radius"):
            return self.c * getattr(self.base, name)
        raise AttributeError(name)


# ---------------------------------------------------------------------------
# Free-function accessors
# ---------------------------------------------------------------------------


def metric_at(M: ManifoldSpec, p) -> np.ndarray:
    return M.metric(M.check_point(p))


def christoffel_at(M: ManifoldSpec, p) -> np.ndarray:
    return M.christoffel(M.check_point(p))


def curvature_at(M: ManifoldSpec, p) -> np.ndarray:
    return M.curvature(M.check_point(p))


def model_distance(M: ManifoldSpec, p, q) -> float:
    """Exact distance on euclidean, sphere, hyperbolic and flat-torus models (and their rescalings)."""
    base = M.base if isinstance(M, Scaled) else M
    if not isinstance(base, (Euclidean, Sphere, Hyperbolic, FlatTorus)):
        raise UnsupportedManifold(f"model_distance is not available on {M.id}")
    return float(M.distance(M.check_point(p), M.check_point(q)))


def sectional_curvature(M: ManifoldSpec, p, X, Y) -> float:
    p = M.check_point(p)
    X, Y = np.asarray(X, float), np.asarray(Y, float)
    R = M.curvature(p)
    g = M.metric(p)
    RXYY = np.einsum("lijk,i,j,k->l", R, Y, X, Y)
    num = RXYY @ g @ X
    den = (X @ g @ X) * (Y @ g @ Y) - (X @ g @ Y) ** 2
    return float(num / den)


def scaled(M: ManifoldSpec, c: float) -> ManifoldSpec:
    return Scaled(M, float(c))


# ---------------------------------------------------------------------------
# Catalog ids, e.g. "sphere:n=2,K=1", "torus:basis=[[1,0],[0,1]]"
# ---------------------------------------------------------------------------


def _split_params(text: str) -> dict:
    params, depth, cur = [], 0, ""
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch == "," and depth == 0:
            params.append(cur)
            cur = ""
        else:
            cur += ch
    if cur.strip():
        params.append(cur)
    out = {}
    for item in params:
        if "=" not in item:
            raise InvalidInput(f"malformed manifold parameter {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = ast.literal_eval(v.strip())
        except (ValueError, SyntaxError) as exc:
            raise InvalidInput(f"cannot parse value of {k!r}: {v!r}") from exc
    return out


def from_id(text: str) -> ManifoldSpec:
    """Build a catalog manifold from its string id."""
    text = text.strip()
    m = re.match(r"scaled:c=([^;]+);(.*)$", text)
    if m:
        return Scaled(from_id(m.group(2)), float(m.group(1)))
    kind, _, rest = text.partition(":")
    params = _split_params(rest) if rest else {}
    try:
        if kind == "euclidean":
            return Euclidean(int(params.get("n", 2)))
        if kind == "sphere":
            return Sphere(int(params.get("n", 2)), float(params.get("K", 1.0)))
        if kind == "hyperbolic":
            return Hyperbolic(int(params.get("n", 2)), float(params.get("K", -1.0)))
        if kind in ("torus", "flat_torus"):
            return FlatTorus(DeckLattice(params.get("basis", np.eye(int(params.get("n", 2))))))
        if kind == "ellipsoid":
            return Ellipsoid(float(params.get("a", 1)), float(params.get("b", 1)), float(params.get("c", 1)))
        if kind == "revolution":
            if "bulge" in params:
                return SurfaceOfRevolution.bulged(float(params["bulge"]))
            return SurfaceOfRevolution(tuple(params["t"]), tuple(params["r"]), tuple(params["z"]))
        if kind == "ctorus":
            return ConformalTorus(
                DeckLattice(params.get("basis", np.eye(2))),
                float(params.get("amp", 0.05)),
                tuple(params.get("wave", (1.0, 0.0))),
            )
    except KeyError as exc:
        raise InvalidInput(f"missing parameter {exc} in {text!r}") from exc
    raise InvalidInput(f"unknown manifold kind {kind!r} in {text!r}")
