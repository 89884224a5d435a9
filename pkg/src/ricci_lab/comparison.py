"""Geodesic triangles, comparison angles and the angle-comparison radius estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateTriangle,
    InvalidInput,
    NoSolutionFound,
    PerimeterTooLarge,
    SamplingBudgetExceeded,
    TriangleInequalityViolation,
)
from .geodesics import GeodesicPath, exp_many, minimal_geodesics_many
from .manifolds import CoordinateSingularity, ManifoldSpec

MU_DEFAULT = 18 / 19
CLAMP_TOL = 1e-12
DEGENERATE_SIDE = 1e-6
VERTEX_TOL = 1e-8
BISECTION_HALVINGS = 12

CSV_COLUMNS = [
    "manifold", "r", "l0", "l1", "l2", "alpha0", "alpha1", "alpha2",
    "cmp0", "cmp1", "cmp2", "mu", "pass",
]


def _clamped_arccos(c: float, what: str) -> float:
    if c > 1 + CLAMP_TOL or c < -1 - CLAMP_TOL or not math.isfinite(c):
        raise TriangleInequalityViolation(f"{what}: cosine {c!r} outside [-1, 1]")
    return math.acos(min(1.0, max(-1.0, c)))


def comparison_angle(H: float, l_prev: float, l_next: float, l_opp: float) -> float:
    """Angle opposite ``l_opp`` in the model triangle of curvature H with the given sides."""
    a, b, c = float(l_prev), float(l_next), float(l_opp)
    if min(a, b, c) <= 0:
        raise InvalidInput(f"side lengths must be positive, got {(a, b, c)}")
    what = f"sides {(a, b, c)}"
    if H == 0:
        return _clamped_arccos((a * a + b * b - c * c) / (2 * a * b), what)
    k = math.sqrt(abs(H))
    if H > 0:
        if a + b + c >= 2 * math.pi / k:
            raise PerimeterTooLarge(f"perimeter {a + b + c} >= {2 * math.pi / k}")
        ka, kb, kc = k * a, k * b, k * c
        cos_g = (math.cos(kc) - math.cos(ka) * math.cos(kb)) / (math.sin(ka) * math.sin(kb))
    else:
        ka, kb, kc = k * a, k * b, k * c
        cos_g = (math.cosh(ka) * math.cosh(kb) - math.cosh(kc)) / (math.sinh(ka) * math.sinh(kb))
    return _clamped_arccos(cos_g, what)


@dataclass(frozen=True, eq=False)
class GeodesicTriangle:
    """Vertices p_0, p_1, p_2; side i runs from p_{i+1} to p_{i+2}, so angle i sits at p_i opposite side i."""

    manifold_id: str
    vertices: np.ndarray
    sides: tuple[GeodesicPath, GeodesicPath, GeodesicPath]
    lengths: np.ndarray
    angles: np.ndarray
    closure_error: float


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    comparison_angles: np.ndarray
    ratios: np.ndarray
    margins: np.ndarray
    mu: float
    passed: bool
    degenerate: np.ndarray


def _assemble(M: ManifoldSpec, verts: np.ndarray, sides) -> GeodesicTriangle:
    lengths = np.array([s.length for s in sides])
    angles = np.empty(3)
    for i in range(3):
        incoming = sides[(i + 1) % 3]  # p_{i+2} -> p_i
        outgoing = sides[(i + 2) % 3]  # p_i -> p_{i+1}
        angles[i] = float(M.angle(verts[i], -incoming.end_velocity, outgoing.initial_velocity))
    closure = max(float(np.linalg.norm(M.chart_diff(sides[i].end, sides[(i + 1) % 3].start))) for i in range(3))
    return GeodesicTriangle(M.id, verts, tuple(sides), lengths, angles, closure)


def measure_triangles(M: ManifoldSpec, triples, method: str = "shooting") -> list[GeodesicTriangle]:
    """Measure many triangles at once (all sides are solved in one batch)."""
    triples = [np.array([M.check_point(v) for v in t]) for t in triples]
    pairs = []
    for verts in triples:
        for i in range(3):
            a, b = verts[(i + 1) % 3], verts[(i + 2) % 3]
            if float(np.linalg.norm(M.chart_diff(a, b))) < VERTEX_TOL:
                raise DegenerateTriangle(f"vertices {a} and {b} coincide")
            pairs.append((a, b))
    found = minimal_geodesics_many(M, pairs, 0.0, method=method)
    out = []
    for k, verts in enumerate(triples):
        sides = [found[3 * k + i][0] for i in range(3)]
        if min(s.length for s in sides) < VERTEX_TOL:
            raise DegenerateTriangle(f"side shorter than {VERTEX_TOL}")
        out.append(_assemble(M, verts, sides))
    return out


def measure_triangle(M: ManifoldSpec, p0, p1, p2, method: str = "shooting") -> GeodesicTriangle:
    """Triangle with shortest-found sides between the three vertices."""
    return measure_triangles(M, [(p0, p1, p2)], method=method)[0]


def _measure_skipping(M: ManifoldSpec, triples, method: str) -> list[GeodesicTriangle]:
    """measure_triangles, dropping the triangles that are degenerate or cannot be solved."""
    skip = (DegenerateTriangle, NoSolutionFound, CoordinateSingularity)
    try:
        return measure_triangles(M, triples, method=method) if len(triples) else []
    except skip:
        out = []
        for t in triples:
            try:
                out.extend(measure_triangles(M, [t], method=method))
            except skip:
                continue
        return out


def sample_triangles(
    M: ManifoldSpec,
    count: int,
    radius: float,
    seed: int,
    method: str = "auto",
    center_margin: float = 0.0,
    max_rounds: int = 50,
) -> list[GeodesicTriangle]:
    """Triangles with vertices exp_c(radius F z), z uniform in the unit ball.

    Centers c are volume-uniform samples with chart margin at least
    ``center_margin``; slivers with a side below radius/20 are rejected.
    """
    rng = np.random.default_rng(seed)
    n = M.dim
    out: list[GeodesicTriangle] = []
    for _ in range(max_rounds):
        k = count - len(out) + 8
        C = M.sample_points(rng, 8 * k)
        C = C[M.chart_margin(C) >= center_margin][:k]
        z = unit_ball_samples(rng, 3 * len(C), n).reshape(len(C), 3, n)
        tangent = radius * np.einsum("bij,bkj->bki", M.frame(C), z)
        verts = exp_many(M, np.repeat(C, 3, axis=0), tangent.reshape(-1, n)).reshape(len(C), 3, n)
        ok = np.isfinite(verts).all(axis=(1, 2))
        for t in _measure_skipping(M, list(verts[ok]), method):
            if np.min(t.lengths) >= radius / 20:
                out.append(t)
                if len(out) == count:
                    return out
    raise SamplingBudgetExceeded(f"only {len(out)} of {count} triangles sampled on {M.id}")


def euclidean_comparison_angles(lengths) -> np.ndarray:
    l = np.asarray(lengths, float)
    return np.array([comparison_angle(0.0, l[(i - 1) % 3], l[(i + 1) % 3], l[i]) for i in range(3)])


def check_toponogov(t: GeodesicTriangle, mu: float = MU_DEFAULT) -> ComparisonReport:
    """Does every non-degenerate corner satisfy alpha_i > mu * (Euclidean comparison angle)?"""
    if not 0 < mu <= 1:
        raise InvalidInput(f"mu must lie in (0, 1], got {mu}")
    l = t.lengths
    degenerate = np.array([min(l[(i + 1) % 3], l[(i + 2) % 3]) < DEGENERATE_SIDE for i in range(3)])
    cmp = np.full(3, np.nan)
    for i in range(3):
        if not degenerate[i]:
            cmp[i] = comparison_angle(0.0, l[(i - 1) % 3], l[(i + 1) % 3], max(l[i], 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = t.angles / cmp
    margins = t.angles - mu * cmp
    passed = bool(np.all(margins[~degenerate] > 0))
    return ComparisonReport(cmp, ratios, margins, float(mu), passed, degenerate)


def report_row(manifold_id: str, r: float, t: GeodesicTriangle, rep: ComparisonReport) -> dict:
    row = {"manifold": manifold_id, "r": r}
    row.update({f"l{i}": float(t.lengths[i]) for i in range(3)})
    row.update({f"alpha{i}": float(t.angles[i]) for i in range(3)})
    row.update({f"cmp{i}": float(rep.comparison_angles[i]) for i in range(3)})
    row.update({"mu": rep.mu, "pass": int(rep.passed)})
    return row


# ---------------------------------------------------------------------------
# Angle comparison radius
# ---------------------------------------------------------------------------


def unit_ball_samples(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """Uniform samples of the closed unit ball in R^n."""
    z = rng.standard_normal((count, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * rng.random((count, 1)) ** (1.0 / n)


@dataclass
class RacEstimate:
    value: float
    history: list  # (radius, passed) in evaluation order
    triangles_per_radius: int


class _TriangleSampler:
    """Fixed seeded pool of candidate triangles in normal coordinates around p.

    At radius r the vertices are exp_p(r F z) for unit-ball samples z and a
    g-orthonormal frame F at p, so the pool at radius r on (M, c^2 g) is the
    pool at radius r / c on (M, g).
    """

    def __init__(self, M, p, n_triangles, seed, method):
        self.M, self.p, self.method = M, M.check_point(p), method
        self.n_triangles = n_triangles
        self.budget = 10 * n_triangles
        rng = np.random.default_rng(seed)
        self.z = unit_ball_samples(rng, 3 * self.budget, M.dim).reshape(self.budget, 3, M.dim)
        self.frame = M.frame(self.p)

    def triangles(self, r: float):
        M = self.M
        tangent = r * np.einsum("ij,bkj->bki", self.frame, self.z)
        verts = exp_many(M, self.p, tangent.reshape(-1, M.dim)).reshape(self.budget, 3, M.dim)
        usable = np.isfinite(verts).all(axis=(1, 2))
        accepted = []
        start = 0
        chunk = max(8, self.n_triangles + self.n_triangles // 2)
        while len(accepted) < self.n_triangles:
            cand = [b for b in range(start, min(start + chunk, self.budget)) if usable[b]]
            start += chunk
            if not cand and start >= self.budget:
                raise SamplingBudgetExceeded(
                    f"only {len(accepted)} of {self.n_triangles} triangles accepted at r={r} on {M.id}"
                )
            tris = _measure_skipping(M, [verts[b] for b in cand], self.method)
            for t in tris:
                if np.min(t.lengths) >= r / 20:
                    accepted.append(t)
                    if len(accepted) == self.n_triangles:
                        break
        return accepted


def estimate_rac(
    M: ManifoldSpec,
    p,
    mu: float = MU_DEFAULT,
    r_max: float = 1.0,
    n_triangles: int = 50,
    seed: int = 0,
    method: str = "auto",
    detail: bool = False,
):
    """Largest radius on a bisection grid over (0, r_max] at which every sampled triangle passes.

    Returns r_max when r_max itself passes and 0 when no grid radius does.
    This is a Monte Carlo estimate: a failing triangle may exist that the
    sample misses, so the result can overshoot the true radius.
    """
    if not 0 < mu < 1:
        raise InvalidInput("mu must lie in (0, 1)")
    if n_triangles < 1 or not r_max > 0:
        raise InvalidInput("need n_triangles >= 1 and r_max > 0")
    sampler = _TriangleSampler(M, p, n_triangles, seed, method)
    history = []

    def passes(r):
        ok = all(check_toponogov(t, mu).passed for t in sampler.triangles(r))
        history.append((r, ok))
        return ok

    if passes(r_max):
        value = r_max
    else:
        lo, hi = 0.0, r_max
        for _ in range(BISECTION_HALVINGS):
            mid = 0.5 * (lo + hi)
            if passes(mid):
                lo = mid
            else:
                hi = mid
        value = lo
    if detail:
        return RacEstimate(value, history, n_triangles)
    return value
