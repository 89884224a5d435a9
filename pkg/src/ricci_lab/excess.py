"""Excess functions, their monotonicity, and the regular-point test near a diameter pair."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentOutOfRange, GeometryError, InvalidInput, PreconditionViolated
from .geodesics import minimal_geodesics, minimal_geodesics_many
from .manifolds import ManifoldSpec

CLAMP = 1e-8
TOL_EXTRA = 1e-3

CSV_COLUMNS = ["p0", "p1", "x", "e", "min_angle", "predicted_bound", "regular"]


def _use_closed(M: ManifoldSpec, method: str) -> bool:
    return method == "closed_form" or (method == "auto" and M.closed_form)


def distances(M: ManifoldSpec, A, B, method: str = "auto") -> np.ndarray:
    """Row-wise distances d(A[i], B[i])."""
    A, B = np.atleast_2d(np.asarray(A, float)), np.atleast_2d(np.asarray(B, float))
    A, B = np.broadcast_arrays(A, B)
    if _use_closed(M, method):
        return np.asarray(M.distance(A, B), float)
    out = np.zeros(len(A))
    same = np.linalg.norm(M.chart_diff(A, B), axis=1) < 1e-14
    idx = np.flatnonzero(~same)
    if len(idx):
        found = minimal_geodesics_many(M, [(A[i], B[i]) for i in idx], 0.0, method=method)
        out[idx] = [paths[0].length for paths in found]
    return out


def _clamp(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, float)
    return np.where((e < 0) & (e >= -CLAMP), 0.0, e)


def excess_values(M: ManifoldSpec, p0, p1, X, method: str = "auto") -> np.ndarray:
    """e(x) = d(p0, x) + d(p1, x) - d(p0, p1) for each row of X."""
    X = np.atleast_2d(np.asarray(X, float))
    p0, p1 = M.check_point(p0), M.check_point(p1)
    A = np.vstack([np.broadcast_to(p0, X.shape), np.broadcast_to(p1, X.shape), p0[None]])
    B = np.vstack([X, X, p1[None]])
    d = distances(M, A, B, method)
    k = len(X)
    return _clamp(d[:k] + d[k : 2 * k] - d[-1])


def excess_value(M: ManifoldSpec, p0, p1, x, method: str = "auto") -> float:
    return float(excess_values(M, p0, p1, [x], method)[0])


@dataclass(frozen=True)
class ExcessMax:
    value: float
    argmax: np.ndarray
    n_samples: int


def max_excess(M: ManifoldSpec, p0, p1, n_samples: int, seed: int, method: str = "auto", chunk: int = 2000) -> ExcessMax:
    """Largest excess over seeded samples of M (volume-uniform on compact manifolds)."""
    if n_samples < 1:
        raise InvalidInput("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    X = M.sample_points(rng, n_samples)
    values = np.concatenate([excess_values(M, p0, p1, X[i : i + chunk], method) for i in range(0, n_samples, chunk)])
    j = int(np.argmax(values))
    return ExcessMax(float(values[j]), X[j], n_samples)


@dataclass(frozen=True)
class MonotonicityCheck:
    e: float
    e_inner: float
    p0_inner: np.ndarray
    p1_inner: np.ndarray

    @property
    def gap(self) -> float:
        return self.e - self.e_inner


def excess_monotonicity(M: ManifoldSpec, p0, p1, x, s0: float, s1: float, method: str = "auto") -> MonotonicityCheck:
    """Compare e_{p0,p1}(x) with e_{p0',p1'}(x), p_i' at fraction s_i along a minimal geodesic x -> p_i."""
    g0 = minimal_geodesics(M, x, p0, 0.0, method=method)[0]
    g1 = minimal_geodesics(M, x, p1, 0.0, method=method)[0]
    a = M.normalize(g0.point_at(s0 * g0.length))
    b = M.normalize(g1.point_at(s1 * g1.length))
    e = excess_value(M, p0, p1, x, method)
    e_inner = excess_value(M, a, b, x, method)
    return MonotonicityCheck(e, e_inner, a, b)


def regularity_angle_bound(t: float, e: float) -> float:
    """(18/19) arccos(-1 - (e^2 - 4 e t) / (2 t^2)): lower bound on the angle at x seen from p', q'."""
    if not t > 0 or e < 0:
        raise ArgumentOutOfRange(f"need t > 0 and e >= 0, got t={t}, e={e}")
    if e > 2 * t * (1 + 1e-12):
        raise ArgumentOutOfRange(f"need e <= 2t, got e={e}, t={t}")
    arg = -1 - (e * e - 4 * e * t) / (2 * t * t)
    return (18 / 19) * math.acos(min(1.0, max(-1.0, arg)))


@dataclass(frozen=True, eq=False)
class RegularPointReport:
    x: np.ndarray
    min_angle: float
    regular: bool
    n_pairs: int
    t: float
    local_excess: float
    predicted_bound: float
    excess: float

    def row(self, p0, p1) -> dict:
        fmt = lambda v: " ".join(f"{c:.12g}" for c in np.asarray(v, float))  # noqa: E731
        return {
            "p0": fmt(p0),
            "p1": fmt(p1),
            "x": fmt(self.x),
            "e": self.excess,
            "min_angle": self.min_angle,
            "predicted_bound": self.predicted_bound,
            "regular": int(self.regular),
        }


def check_regular_point(
    M: ManifoldSpec,
    p,
    q,
    x,
    delta: float,
    rac: float | None = None,
    tol_extra: float = TOL_EXTRA,
    method: str = "auto",
) -> RegularPointReport:
    """Smallest angle at x between near-minimal geodesics x -> p and x -> q; regular iff > pi/2.

    Also evaluates the angle bound predicted from the excess of the points
    p', q' at distance t = min(rac/4, delta) along the geodesics.
    """
    x = M.check_point(x)
    to_p = minimal_geodesics(M, x, p, tol_extra, method=method)
    to_q = minimal_geodesics(M, x, q, tol_extra, method=method)
    if not to_p or not to_q:
        raise PreconditionViolated("x coincides with p or q")
    if to_p[0].length < delta or to_q[0].length < delta:
        raise PreconditionViolated(f"x lies within delta={delta} of p or q")
    best = None
    for a in to_p:
        for b in to_q:
            ang = float(M.angle(x, a.initial_velocity, b.initial_velocity))
            if best is None or ang < best[0]:
                best = (ang, a, b)
    min_angle, a, b = best
    t = min(rac / 4, delta) if rac is not None else delta
    p_in = M.normalize(a.point_at(t))
    q_in = M.normalize(b.point_at(t))
    e_local = max(0.0, 2 * t - float(distances(M, p_in, q_in, method)[0]))
    try:
        predicted = regularity_angle_bound(t, min(e_local, 2 * t))
    except GeometryError:
        predicted = math.nan
    e = excess_value(M, p, q, x, method)
    return RegularPointReport(x, min_angle, min_angle > math.pi / 2, len(to_p) * len(to_q), t, e_local, predicted, e)
