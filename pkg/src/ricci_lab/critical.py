"""Criticality of distance functions, the critical-point angle bound and cap packing counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls
from scipy.spatial import ConvexHull, QhullError

from .errors import InvalidTheta, NuBelowThreshold, PreconditionViolated
from .geodesics import minimal_geodesics
from .manifolds import ManifoldSpec

TOL_CRIT = 1e-3
TOL_EXTRA = 1e-3
SIN_PI_36 = math.sin(math.pi / 36)
NU_THRESHOLD = (1 + SIN_PI_36) / (1 - SIN_PI_36)
COS_CLAMP = 1e-12

CSV_COLUMNS = ["manifold", "p", "q", "n_directions", "hull_margin", "is_critical"]


# ---------------------------------------------------------------------------
# Convex position of unit vectors
# ---------------------------------------------------------------------------


def min_norm_in_hull(U: np.ndarray) -> tuple[float, np.ndarray]:
    """Distance from the origin to conv(rows of U), with the convex weights attaining it."""
    k = len(U)
    big = 1e3
    A = np.vstack([U.T, big * np.ones((1, k))])
    b = np.concatenate([np.zeros(U.shape[1]), [big]])
    lam, _ = nnls(A, b, maxiter=50 * k)
    lam = lam / lam.sum()
    return float(np.linalg.norm(lam @ U)), lam


def hull_margin(U: np.ndarray) -> float:
    """Signed distance of the origin to the boundary of conv(U): positive inside, negative outside.

    A hull of lower dimension that still contains the origin has margin 0.
    """
    U = np.asarray(U, float)
    if len(U) == 0:
        return -math.inf
    dist, _ = min_norm_in_hull(U)
    if dist > 1e-12:
        return -dist
    try:
        hull = ConvexHull(U)
    except (QhullError, ValueError):
        return 0.0
    return float(max(0.0, np.min(-hull.equations[:, -1])))


@dataclass(frozen=True, eq=False)
class CriticalityReport:
    manifold_id: str
    p: np.ndarray
    q: np.ndarray
    directions: np.ndarray  # unit chart vectors at q pointing along minimal geodesics to p
    frame_directions: np.ndarray  # the same, in a g-orthonormal frame at q
    hull_margin: float
    is_critical: bool

    def row(self) -> dict:
        return {
            "manifold": self.manifold_id,
            "p": " ".join(f"{v:.12g}" for v in self.p),
            "q": " ".join(f"{v:.12g}" for v in self.q),
            "n_directions": len(self.directions),
            "hull_margin": self.hull_margin,
            "is_critical": int(self.is_critical),
        }


def is_critical(
    M: ManifoldSpec,
    p,
    q,
    tol_extra: float = TOL_EXTRA,
    tol_crit: float = TOL_CRIT,
    method: str = "shooting",
) -> CriticalityReport:
    """Is q a critical point of d(p, .)?  Decided by whether 0 lies in the hull of directions q -> p."""
    paths = minimal_geodesics(M, q, p, tol_extra, method=method)
    if not paths:
        raise PreconditionViolated("p and q coincide")
    q = np.asarray(q, float)
    D = np.array([g.initial_velocity for g in paths])
    U = D @ M.coframe(q).T
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    margin = hull_margin(U)
    return CriticalityReport(M.id, np.asarray(p, float), q, D, U, margin, bool(margin >= -tol_crit))


def direct_criticality(U: np.ndarray, probes: np.ndarray, slack: float = 1e-3) -> bool:
    """Definition check: every probe direction is within pi/2 + slack of some direction in U."""
    cosines = probes @ U.T
    return bool(np.all(np.arccos(np.clip(cosines.max(axis=1), -1, 1)) <= math.pi / 2 + slack))


# ---------------------------------------------------------------------------
# Angle bound between minimal geodesics to successive critical points
# ---------------------------------------------------------------------------


def cpe_angle_lower_bound(nu: float) -> float:
    """(18/19) arccos(sin(pi/36) + (1 + sin(pi/36)) / nu), for nu at or above the threshold.

    When the cosine argument is within 1e-12 of 1 it is taken as 1 (bound 0);
    lowering a lower bound keeps it valid.
    """
    nu = float(nu)
    if not nu >= NU_THRESHOLD * (1 - 1e-12):
        raise NuBelowThreshold(f"nu={nu} is below the threshold {NU_THRESHOLD}")
    # 1 - argument, written to avoid cancellation near the threshold
    gap = ((1 - SIN_PI_36) * nu - (1 + SIN_PI_36)) / nu
    if gap <= COS_CLAMP:
        return 0.0
    return (18 / 19) * 2 * math.asin(math.sqrt(gap / 2)) if gap < 1 else (18 / 19) * math.acos(1 - gap)


@dataclass(frozen=True, eq=False)
class CpeReport:
    status: str  # "pass", "fail" or "vacuous"
    theta: float
    bound: float
    nu: float
    d1: float
    d2: float
    criticality: CriticalityReport | None

    @property
    def passed(self) -> bool:
        return self.status != "fail"


def verify_cpe(
    M: ManifoldSpec,
    p,
    q1,
    q2,
    nu: float,
    mu_slack: float = 0.0,
    tol_extra: float = TOL_EXTRA,
    method: str = "shooting",
) -> CpeReport:
    """Measure the smallest angle at p between minimal geodesics to q1 and to q2.

    If q1 is not critical for p the statement is vacuous and reported as such;
    a violated distance ratio d(p, q2) >= nu d(p, q1) raises.
    """
    bound = cpe_angle_lower_bound(nu)
    to_q1 = minimal_geodesics(M, p, q1, tol_extra, method=method)
    to_q2 = minimal_geodesics(M, p, q2, tol_extra, method=method)
    if not to_q1 or not to_q2:
        raise PreconditionViolated("q1 and q2 must differ from p")
    d1, d2 = to_q1[0].length, to_q2[0].length
    if d2 < nu * d1 * (1 - 1e-9):
        raise PreconditionViolated(f"d(p,q2)={d2:.6g} < nu*d(p,q1)={nu * d1:.6g}")
    crit = is_critical(M, p, q1, tol_extra, method=method)
    if not crit.is_critical:
        return CpeReport("vacuous", math.nan, bound, nu, d1, d2, crit)
    p = np.asarray(p, float)
    theta = min(float(M.angle(p, a.initial_velocity, b.initial_velocity)) for a in to_q1 for b in to_q2)
    status = "pass" if theta >= bound - mu_slack else "fail"
    return CpeReport(status, theta, bound, nu, d1, d2, crit)


# ---------------------------------------------------------------------------
# Cap packing on the unit sphere S^{n-1}
# ---------------------------------------------------------------------------


def sin_power_integral(m: int, r: float) -> float:
    """Integral of sin^m over [0, r] by the standard reduction recurrence."""
    s, c = math.sin(r), math.cos(r)
    prev, cur = r, 1 - c  # I_0, I_1
    if m == 0:
        return prev
    for k in range(2, m + 1):
        prev, cur = cur, -(s ** (k - 1)) * c / k + (k - 1) / k * prev
    return cur


def cap_volume(n: int, r: float) -> float:
    """Volume of a geodesic ball of radius r in the unit sphere S^{n-1}."""
    from .manifolds import sphere_volume

    if n == 2:
        return 2 * r
    return sphere_volume(n - 2) * sin_power_integral(n - 2, r)


def packing_count(n: int, theta: float) -> float:
    """vol(S^{n-1}) / vol(cap of radius theta/2): caps of angular radius theta/2 that fit, by volume."""
    if n < 2 or not 0 < theta <= math.pi:
        raise InvalidTheta(f"need n >= 2 and 0 < theta <= pi, got n={n}, theta={theta}")
    if n == 2:
        return 2 * math.pi / theta
    return sin_power_integral(n - 2, math.pi) / sin_power_integral(n - 2, theta / 2)
