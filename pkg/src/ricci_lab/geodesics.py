"""Numerical geodesics: integration, multi-start shooting, Jacobi fields.

Two integrators are used.  ``integrate_geodesic`` and the Jacobi propagator
run scipy's adaptive Dormand-Prince pair; the boundary-value solver runs a
batched fixed-step RK4 over many shooting candidates at once, refining the
step until the solutions stop moving.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize_scalar

from .errors import GeometryError, InvalidInput, NoSolutionFound, StepSizeUnderflow
from .manifolds import ManifoldSpec, _fibonacci_directions

RTOL = 1e-9
ATOL = 1e-11
MINIMAL_SLACK = 1e-3


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    """Unit-speed geodesic sampled at increasing times in [0, length]."""

    manifold_id: str
    start: np.ndarray
    initial_velocity: np.ndarray
    length: float
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    is_minimal: bool = False
    exited_chart: bool = False

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    @property
    def end_velocity(self) -> np.ndarray:
        return self.velocities[-1]

    def point_at(self, t) -> np.ndarray:
        if len(self.times) < 2:
            return np.broadcast_to(self.start, np.shape(t) + self.start.shape).copy()
        spline = CubicHermiteSpline(self.times, self.points, self.velocities, axis=0)
        return spline(np.clip(t, 0.0, self.length))

    def velocity_at(self, t) -> np.ndarray:
        spline = CubicHermiteSpline(self.times, self.points, self.velocities, axis=0)
        return spline.derivative()(np.clip(t, 0.0, self.length))

    def reversed(self) -> GeodesicPath:
        return GeodesicPath(
            self.manifold_id,
            self.points[-1].copy(),
            -self.velocities[-1],
            self.length,
            self.length - self.times[::-1],
            self.points[::-1].copy(),
            -self.velocities[::-1],
            self.is_minimal,
            self.exited_chart,
        )


@dataclass(frozen=True, eq=False)
class ConjugateReport:
    geodesic: GeodesicPath
    first_conjugate_time: float | None
    horizon: float
    exited_at: float | None = None


# ---------------------------------------------------------------------------
# Initial-value problems
# ---------------------------------------------------------------------------


def _geodesic_rhs(M: ManifoldSpec, n: int):
    def rhs(_t, y):
        x, u = y[:n], y[n:]
        return np.concatenate([u, M.geodesic_acc(x, u)])

    return rhs


def integrate_geodesic(M: ManifoldSpec, p, v, T: float, step: float | None = None) -> GeodesicPath:
    """Follow the geodesic from p with initial direction v for arc length T.

    ``v`` is rescaled to unit speed.  If the path reaches the edge of the
    chart it is truncated there and flagged with ``exited_chart``.
    """
    p = M.check_point(p)
    v = np.asarray(v, dtype=float)
    speed = float(M.norm(p, v))
    if not speed > 0:
        raise InvalidInput("initial velocity must be nonzero")
    if not T > 0:
        raise InvalidInput("integration time must be positive")
    u0 = v / speed
    n = M.dim
    step = step if step is not None else min(0.01, T / 16)

    def leave(_t, y):
        return M.chart_margin(y[:n])

    leave.terminal = True
    leave.direction = -1
    sol = solve_ivp(
        _geodesic_rhs(M, n),
        (0.0, T),
        np.concatenate([p, u0]),
        method="RK45",
        rtol=RTOL,
        atol=ATOL,
        dense_output=True,
        events=leave,
        max_step=max(step, 1e-3),
    )
    if sol.status == -1:
        raise StepSizeUnderflow(sol.message)
    t_end = float(sol.t[-1])
    exited = sol.status == 1
    times = np.arange(0.0, t_end, step)
    times = np.append(times[times < t_end - 1e-12], t_end)
    ys = sol.sol(times).T
    ys[-1] = sol.y[:, -1]
    return GeodesicPath(M.id, p, u0, t_end, times, ys[:, :n], ys[:, n:], exited_chart=exited)


def exp_map(M: ManifoldSpec, p, w) -> np.ndarray:
    p = M.check_point(p)
    length = float(M.norm(p, np.asarray(w, float)))
    if length == 0:
        return p.copy()
    return integrate_geodesic(M, p, w, length).end


# ---------------------------------------------------------------------------
# Batched fixed-step shooting
# ---------------------------------------------------------------------------


def _rk4_shoot(M: ManifoldSpec, P: np.ndarray, W: np.ndarray, steps: int, keep: bool = False):
    """Integrate x'' = -Gamma(x')(x') for s in [0, 1] from (P, W), all rows at once.

    Rows that leave the chart become NaN.  With ``keep`` the full
    trajectories (steps + 1, B, n) are returned as well.
    """
    if hasattr(M, "ambient_shoot"):
        return M.ambient_shoot(np.asarray(P, float), np.asarray(W, float), steps, keep)
    h = 1.0 / steps
    X, V = P.astype(float).copy(), W.astype(float).copy()

    acc = M.geodesic_acc

    traj_x, traj_v = ([X.copy()], [V.copy()]) if keep else (None, None)
    alive = np.ones(len(X), dtype=bool)
    with np.errstate(all="ignore"):
        for _ in range(steps):
            k1x, k1v = V, acc(X, V)
            x2, v2 = X + 0.5 * h * k1x, V + 0.5 * h * k1v
            k2x, k2v = v2, acc(x2, v2)
            x3, v3 = X + 0.5 * h * k2x, V + 0.5 * h * k2v
            k3x, k3v = v3, acc(x3, v3)
            x4, v4 = X + h * k3x, V + h * k3v
            k4x, k4v = v4, acc(x4, v4)
            X = X + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
            V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(V).all(axis=1)
            bad |= ~(M.chart_margin(np.nan_to_num(X)) > 0)
            if bad.any():
                alive &= ~bad
                X[~alive] = P[~alive]
                V[~alive] = 0.0
            if keep:
                traj_x.append(X.copy())
                traj_v.append(V.copy())
    X[~alive] = np.nan
    V[~alive] = np.nan
    if keep:
        tx, tv = np.array(traj_x), np.array(traj_v)
        tx[:, ~alive] = np.nan
        return X, V, tx, tv
    return X, V


def _newton_shoot(M, P, Q, W, steps, iters, tol, tol_stall=None):
    """Damped Gauss-Newton on the endpoint miss r(W) = exp_p(W) - q (mod chart identifications).

    A row counts as converged when its miss drops below ``tol``, or when it
    is below ``tol_stall`` and progress has become slow (linear convergence
    at a focal endpoint, where the Jacobian is singular).  Rows that barely
    improve for six consecutive iterations are abandoned.
    """
    tol_stall = tol if tol_stall is None else tol_stall
    B, n = W.shape
    P = np.broadcast_to(P, (B, n))
    Q = np.broadcast_to(Q, (B, n))
    W = W.copy()
    active = np.ones(B, dtype=bool)
    done = np.zeros(B, dtype=bool)
    slow = np.zeros(B, dtype=int)
    stuck = np.zeros(B, dtype=int)

    # surfaces shot in ambient space measure the miss there too; near the
    # chart poles chart differences are badly conditioned
    if hasattr(M, "ambient_shoot"):
        def diff(A, X):
            return M.embed(X) - M.embed(A)
    else:
        diff = M.chart_diff

    def residual(Wc, rows):
        X1, _ = _rk4_shoot(M, P[rows], Wc, steps)
        r = diff(Q[rows], np.nan_to_num(X1, nan=0.0))
        r[~np.isfinite(X1).all(axis=1)] = np.nan
        return X1, r

    X1, r = residual(W, np.arange(B))
    rn = np.linalg.norm(r, axis=1)
    active &= np.isfinite(rn)
    for _ in range(iters):
        done |= active & (rn <= tol)
        todo = np.where(active & ~done)[0]
        if len(todo) == 0:
            break
        Wt = W[todo]
        hfd = 1e-7 * np.maximum(1.0, np.linalg.norm(Wt, axis=1))
        pert = Wt[:, None, :] + hfd[:, None, None] * np.eye(n)[None]
        rows = np.repeat(todo, n)
        Xp, _ = _rk4_shoot(M, P[rows], pert.reshape(-1, n), steps)
        dX = diff(np.repeat(X1[todo], n, axis=0), np.nan_to_num(Xp, nan=0.0))
        dX[~np.isfinite(Xp).all(axis=1)] = np.nan
        J = np.swapaxes(dX.reshape(len(todo), n, -1), 1, 2) / hfd[:, None, None]
        ok = np.isfinite(J).all(axis=(1, 2))
        active[todo[~ok]] = False
        todo, J, Wt = todo[ok], J[ok], Wt[ok]
        if len(todo) == 0:
            continue
        delta = -np.einsum("bij,bj->bi", np.linalg.pinv(J, rcond=1e-7), r[todo])
        before = rn[todo].copy()
        alpha = np.ones(len(todo))
        pending = np.arange(len(todo))
        for _half in range(6):
            cand = Wt[pending] + alpha[pending, None] * delta[pending]
            Xc, rc = residual(cand, todo[pending])
            rcn = np.linalg.norm(rc, axis=1)
            good = np.isfinite(rcn) & (rcn < rn[todo[pending]])
            idx = todo[pending[good]]
            W[idx], X1[idx], r[idx], rn[idx] = cand[good], Xc[good], rc[good], rcn[good]
            pending = pending[~good]
            if len(pending) == 0:
                break
            alpha[pending] *= 0.25
        ratio = rn[todo] / np.maximum(before, 1e-300)
        slow[todo] = np.where(ratio > 0.2, slow[todo] + 1, 0)
        stuck[todo] = np.where(ratio > 0.9, stuck[todo] + 1, 0)
        floor = rn[todo] <= tol_stall
        done[todo[floor & (slow[todo] > 0)]] = True
        active[todo[~floor & (stuck[todo] >= 6)]] = False
    done |= active & (rn <= tol)
    return W, done


def _dedupe(M, p, W, tol_dir=1e-5, tol_len=1e-6):
    lengths = M.norm(np.broadcast_to(p, W.shape), W)
    order = np.lexsort(tuple(W[:, i] for i in reversed(range(W.shape[1]))) + (np.round(lengths, 9),))
    kept: list[int] = []
    for i in order:
        dup = False
        for j in kept:
            if abs(lengths[i] - lengths[j]) <= tol_len * max(1.0, lengths[j]):
                if M.angle(p, W[i], W[j]) <= tol_dir:
                    dup = True
                    break
        if not dup:
            kept.append(int(i))
    kept_arr = np.array(kept, dtype=int)
    return W[kept_arr], lengths[kept_arr], kept_arr


def _start_directions(M, p, q, n_directions=None):
    n = M.dim
    straight = M.chart_diff(p, q)
    guess = float(M.norm(p, straight))
    if not guess > 0:
        guess = 1.0
    count = n_directions if n_directions is not None else 2 * n * n
    F = M.frame(p)
    dirs = _fibonacci_directions(n, count) @ F.T
    starts = [straight[None, :], guess * dirs]
    if hasattr(M, "embed"):
        # near a coordinate pole the chart length overshoots badly; the ambient chord never does
        chord = float(np.linalg.norm(M.embed(q) - M.embed(p)))
        if 0 < chord < 0.8 * guess:
            starts.append(chord * dirs)
    return np.vstack(starts)


def _paths_from_shooting(M, P, W, steps):
    n = M.dim
    _, _, tx, tv = _rk4_shoot(M, P, W, steps, keep=True)
    lengths = M.norm(P, W)
    out = []
    for b in range(len(W)):
        L = float(lengths[b])
        out.append(
            GeodesicPath(
                M.id,
                P[b].copy(),
                W[b] / L,
                L,
                np.linspace(0.0, L, steps + 1),
                tx[:, b, :n],
                tv[:, b, :n] / L,
                is_minimal=True,
            )
        )
    return out


def _paths_closed(M, p, W, samples=129):
    s = np.linspace(0.0, 1.0, samples)
    out = []
    for w in W:
        L = float(M.norm(p, w))
        pts, vel = M.geodesic_closed(p, w, s)
        out.append(GeodesicPath(M.id, p.copy(), w / L, L, s * L, pts, vel / L, is_minimal=True))
    return out


def _sorted_by_length(W, lengths):
    return np.lexsort(tuple(W[:, i] for i in reversed(range(W.shape[1]))) + (np.round(lengths, 9),))


def minimal_geodesics(
    M: ManifoldSpec,
    p,
    q,
    tol_extra: float = 0.0,
    method: str = "shooting",
    n_directions: int | None = None,
) -> list[GeodesicPath]:
    """All geodesics p -> q of length at most (1 + tol_extra) times the shortest found.

    ``method`` is "shooting" (multi-start Newton), "closed_form" (the
    manifold's own logarithm) or "auto" (closed form when available).
    Paths are sorted by length, then lexicographically by initial velocity.
    """
    return minimal_geodesics_many(M, [(p, q)], tol_extra, method, n_directions)[0]


def minimal_geodesics_many(
    M: ManifoldSpec,
    pairs,
    tol_extra: float = 0.0,
    method: str = "shooting",
    n_directions: int | None = None,
) -> list[list[GeodesicPath]]:
    """``minimal_geodesics`` for many endpoint pairs; shooting runs all pairs in one batch."""
    if method not in ("shooting", "closed_form", "auto"):
        raise InvalidInput(f"unknown geodesic method {method!r}")
    use_closed = method == "closed_form" or (method == "auto" and M.closed_form)
    results: list[list[GeodesicPath] | None] = []
    todo = []
    for p, q in pairs:
        p, q = M.check_point(p), M.check_point(q)
        if float(np.linalg.norm(M.chart_diff(p, q))) < 1e-14:
            results.append([])
        elif use_closed:
            results.append(_closed_connections(M, p, q, tol_extra, n_directions))
        else:
            results.append(None)
            todo.append((len(results) - 1, p, q))
    if todo:
        found = _shoot_batch(M, [t[1] for t in todo], [t[2] for t in todo], tol_extra, n_directions)
        for (slot, _, _), paths in zip(todo, found):
            results[slot] = paths
    return results


def _closed_connections(M, p, q, tol_extra, n_directions):
    W = M.log_all(p, q, tol_extra=tol_extra, n_directions=n_directions)
    if not W:
        raise NoSolutionFound(f"closed-form logarithm failed on {M.id}")
    W = np.array(W)
    lengths = M.norm(np.broadcast_to(p, W.shape), W)
    keep = lengths <= lengths.min() * (1 + tol_extra) * (1 + 1e-9)
    W, lengths = W[keep], lengths[keep]
    return _paths_closed(M, p, W[_sorted_by_length(W, lengths)])


def _fine_steps(length: float) -> int:
    return int(max(64, np.ceil(64 * length)))


def _shoot_batch(M, ps, qs, tol_extra, n_directions):
    starts = [_start_directions(M, p, q, n_directions) for p, q in zip(ps, qs)]
    group = np.concatenate([np.full(len(w), i) for i, w in enumerate(starts)])
    P, Q = np.array(ps)[group], np.array(qs)[group]
    W, ok = _newton_shoot(M, P, Q, np.vstack(starts), steps=20, iters=40, tol=1e-6, tol_stall=1e-3)

    keep_rows = []
    for i in range(len(ps)):
        rows = np.where((group == i) & ok)[0]
        if not len(rows):
            raise NoSolutionFound(f"no shooting start converged from {ps[i]} to {qs[i]} on {M.id}")
        _, lengths, kept = _dedupe(M, ps[i], W[rows], tol_dir=1e-3, tol_len=1e-3)
        near = lengths <= lengths.min() * (1 + tol_extra) * 1.05 + 1e-6
        keep_rows.extend(rows[kept[near]])
    rows = np.array(keep_rows)
    W, group, P, Q = W[rows], group[rows], P[rows], Q[rows]

    steps = _fine_steps(float(np.max(M.norm(P, W))))
    W, ok = _newton_shoot(M, P, Q, W, steps=steps, iters=20, tol=1e-10, tol_stall=1e-6)
    # step doubling until the endpoints of the found solutions stop moving
    for _ in range(3):
        W, group, P, Q = W[ok], group[ok], P[ok], Q[ok]
        if not len(W):
            break
        X1, _ = _rk4_shoot(M, P, W, steps)
        X2, _ = _rk4_shoot(M, P, W, 2 * steps)
        moved = np.linalg.norm(M.chart_diff(X1, np.nan_to_num(X2)), axis=1)
        steps *= 2
        if np.all(moved < 1e-8 * np.maximum(1.0, M.norm(P, W))):
            break
        W, ok = _newton_shoot(M, P, Q, W, steps=steps, iters=10, tol=1e-10, tol_stall=1e-6)
    else:
        W, group, P, Q = W[ok], group[ok], P[ok], Q[ok]

    final_rows = []
    for i in range(len(ps)):
        rows = np.where(group == i)[0]
        if not len(rows):
            raise NoSolutionFound(f"shooting refinement failed from {ps[i]} to {qs[i]} on {M.id}")
        Wi, lengths, kept = _dedupe(M, ps[i], W[rows])
        near = lengths <= lengths.min() * (1 + tol_extra) * (1 + 1e-8)
        sel = rows[kept[near]]
        final_rows.append(sel[_sorted_by_length(W[sel], lengths[near])])
    flat = np.concatenate(final_rows)
    paths = _paths_from_shooting(M, P[flat], W[flat], steps)
    out, k = [], 0
    for sel in final_rows:
        out.append(paths[k : k + len(sel)])
        k += len(sel)
    return out


def geodesic_distance(M: ManifoldSpec, p, q, method: str = "auto") -> float:
    paths = minimal_geodesics(M, p, q, 0.0, method=method)
    return paths[0].length if paths else 0.0


# ---------------------------------------------------------------------------
# Jacobi fields and conjugate points
# ---------------------------------------------------------------------------


def _normal_frame(M, p, u):
    """g-orthonormal vectors spanning the orthogonal complement of u at p (as columns)."""
    g = M.metric(p)
    vecs = [u / np.sqrt(u @ g @ u)]
    for e in np.eye(M.dim):
        w = e - sum((e @ g @ b) * b for b in vecs)
        nw = np.sqrt(max(w @ g @ w, 0.0))
        if nw > 1e-8:
            vecs.append(w / nw)
        if len(vecs) == M.dim:
            break
    return np.array(vecs[1:]).T


def _jacobi_batch(M: ManifoldSpec, P: np.ndarray, U: np.ndarray, horizon: float, grid_step: float = 0.01):
    """Propagate geodesics with their normal Jacobi propagators A (A(0)=0, A'(0)=I).

    Returns a grid of times, positions, velocities, A and A' sampled from the
    dense output; rows that reach the chart boundary stop moving there.
    """
    B, n = P.shape
    m = n - 1
    E0 = np.array([_normal_frame(M, P[b], U[b]) for b in range(B)])
    sizes = [n, n, n * m, m * m, m * m]
    offs = np.cumsum([0] + sizes)
    width = offs[-1]
    y0 = np.concatenate(
        [P, U, E0.reshape(B, -1), np.zeros((B, m * m)), np.tile(np.eye(m).ravel(), (B, 1))], axis=1
    )

    def unpack(Y):
        return [Y[:, offs[i] : offs[i + 1]] for i in range(5)]

    def rhs(_t, y):
        Y = y.reshape(B, width)
        x, u, E, A, Ad = unpack(Y)
        E = E.reshape(B, n, m)
        A = A.reshape(B, m, m)
        inside = M.chart_margin(x) > 0
        xs = np.where(inside[:, None], x, P)
        gam = M.christoffel(xs)
        R = M.curvature(xs)
        g = M.metric(xs)
        du = -np.einsum("bkij,bi,bj->bk", gam, u, u)
        dE = -np.einsum("bkij,bi,bjc->bkc", gam, u, E)
        RE = np.einsum("blijk,bi,bjc,bk->blc", R, u, E, u)
        K = np.einsum("bla,blr,brc->bac", E, g, RE)
        dAd = -np.einsum("bac,bcd->bad", K, A)
        out = np.concatenate([u, du, dE.reshape(B, -1), Ad, dAd.reshape(B, -1)], axis=1)
        out[~inside] = 0.0
        return out.ravel()

    sol = solve_ivp(rhs, (0.0, horizon), y0.ravel(), method="RK45", rtol=RTOL, atol=ATOL, dense_output=True)
    if sol.status == -1:
        raise StepSizeUnderflow(sol.message)
    t = np.linspace(0.0, horizon, int(np.ceil(horizon / grid_step)) + 1)
    Y = sol.sol(t).T.reshape(len(t), B, width)
    x, u, _, A, Ad = (Y[..., offs[i] : offs[i + 1]] for i in range(5))
    return t, x, u, A.reshape(len(t), B, m, m), Ad.reshape(len(t), B, m, m), sol, offs, (B, m, width)


def _first_zero(t, A, Ad, exit_index, dense):
    """Earliest time where the propagator A becomes singular, or None."""
    m = A.shape[-1]
    det = np.linalg.det(A)
    smin = np.linalg.svd(A, compute_uv=False)[:, -1]
    dnorm = np.linalg.norm(Ad, ord=2, axis=(1, 2))
    dt = t[1] - t[0]
    last = exit_index if exit_index is not None else len(t) - 1

    def det_at(s):
        return float(np.linalg.det(dense(s)))

    def smin_at(s):
        return float(np.linalg.svd(dense(s), compute_uv=False)[-1])

    for k in range(1, last):
        # odd-multiplicity zero: det changes sign
        if det[k] == 0.0:
            return float(t[k])
        if det[k] * det[k + 1] < 0:
            return float(brentq(det_at, t[k], t[k + 1], xtol=1e-12))
        # even-multiplicity zero: sigma_min has a near-zero local minimum
        if m > 1 and smin[k] < smin[k - 1] and smin[k] <= smin[k + 1] and smin[k] < 2 * dt * dnorm[k]:
            res = minimize_scalar(smin_at, bounds=(t[k - 1], t[k + 1]), method="bounded", options={"xatol": 1e-10})
            if res.fun <= 1e-5 * max(1.0, dnorm[k]):
                return float(res.x)
    return None


def _conjugate_reports(M, P, U, horizon):
    t, x, u, A, Ad, sol, offs, (B, m, width) = _jacobi_batch(M, P, U, horizon)
    reports = []
    margins = M.chart_margin(x)
    for b in range(B):
        outside = np.where(~(margins[:, b] > 0))[0]
        exit_index = int(outside[0]) if len(outside) else None

        def dense(s, b=b):
            y = sol.sol(s).reshape(B, width)[b]
            return y[offs[3] : offs[4]].reshape(m, m)

        tc = _first_zero(t, A[:, b], Ad[:, b], exit_index, dense)
        stop = exit_index if exit_index is not None else len(t)
        path = GeodesicPath(M.id, P[b].copy(), U[b].copy(), float(t[stop - 1]), t[:stop], x[:stop, b], u[:stop, b])
        reports.append(ConjugateReport(path, tc, horizon, float(t[exit_index]) if exit_index is not None else None))
    return reports


def first_conjugate_time(M: ManifoldSpec, p, v, horizon: float) -> ConjugateReport:
    """First time along the geodesic from p in direction v where a normal Jacobi field vanishes."""
    p = M.check_point(p)
    v = np.asarray(v, float)
    speed = float(M.norm(p, v))
    if not speed > 0 or not horizon > 0:
        raise InvalidInput("need a nonzero direction and a positive horizon")
    return _conjugate_reports(M, p[None, :], (v / speed)[None, :], float(horizon))[0]


def random_unit_vectors(M: ManifoldSpec, P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(P.shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    return np.einsum("bij,bj->bi", M.frame(P), z)


@dataclass
class ConjugateRadiusEstimate:
    value: float
    n_samples: int
    n_discarded: int
    times: list = field(default_factory=list)


def estimate_conjugate_radius(
    M: ManifoldSpec, n_samples: int, horizon: float, seed: int, batch: int = 64, detail: bool = False
):
    """Minimum first conjugate time over seeded random unit geodesics; inf if none is found.

    Samples whose geodesic reaches the chart boundary before the horizon
    without a conjugate point are discarded and redrawn.
    """
    if n_samples < 1:
        raise InvalidInput("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    times: list[float] = []
    used = discarded = 0
    while used < n_samples:
        if discarded > 10 * n_samples + 100:
            raise GeometryError(f"too many chart exits while sampling geodesics on {M.id}")
        k = min(batch, n_samples - used)
        P = M.sample_points(rng, k)
        U = random_unit_vectors(M, P, rng)
        for rep in _conjugate_reports(M, P, U, horizon):
            if rep.first_conjugate_time is None and rep.exited_at is not None:
                discarded += 1
                continue
            used += 1
            times.append(np.inf if rep.first_conjugate_time is None else rep.first_conjugate_time)
    value = float(min(times))
    if detail:
        return ConjugateRadiusEstimate(value, used, discarded, times)
    return value


def exp_many(M: ManifoldSpec, P, W) -> np.ndarray:
    """exp_P(W) row by row; closed form when the manifold has one, batched RK4 otherwise.

    Rows whose geodesic leaves the chart come back as NaN.
    """
    P, W = np.atleast_2d(np.asarray(P, float)), np.atleast_2d(np.asarray(W, float))
    P = np.broadcast_to(P, W.shape)
    if M.closed_form:
        with np.errstate(all="ignore"):
            pts, _ = M.geodesic_closed(P, W, np.array([1.0]))
        out = pts[:, -1, :].copy()
        out[~(M.chart_margin(np.nan_to_num(out)) > 0)] = np.nan
        return out
    steps = 2 * _fine_steps(float(np.max(M.norm(P, W), initial=0.0)))
    X, _ = _rk4_shoot(M, P, W, steps)
    return X
