"""Independent reference computations shared by the unit and acceptance tests."""

import itertools
import math

import mpmath
import numpy as np

from ricci_lab.bounds import covering_number, rank_bound


def cpe_mp(nu):
    mpmath.mp.dps = 50
    s = mpmath.sin(mpmath.pi / 36)
    return mpmath.mpf(18) / 19 * mpmath.acos(s + (1 + s) / mpmath.mpf(nu))


def lattice_directions(L, p, q, tol=1e-9):
    """Unit directions at q of all shortest lifts q -> p, by brute-force translate enumeration."""
    ks = np.array([(i, j) for i in range(-3, 4) for j in range(-3, 4)])
    d = np.asarray(p) - np.asarray(q) + ks @ L
    n = np.linalg.norm(d, axis=1)
    keep = n <= n.min() + tol
    return d[keep] / n[keep, None]


def hand_unrolled(n, H, D, rac, divisor=20):
    """Independent unroll: radii 2D, 2D/10, ... down to the first one at or below rac/divisor."""
    rank = rank_bound(n)
    radii = [2 * D]
    while radii[-1] > rac / divisor * (1 + 1e-12):
        radii.append(radii[-1] / 10)
    Ns = []
    for r in radii:
        eps = r / 10 ** (n + 1)
        if H == 0 and n == 2:
            Ns.append(math.ceil((2 * r / eps + 1) ** 2 - 1e-9))
        else:
            Ns.append(covering_number(n, H, r, eps)[0])
    a = (len(radii) - 1) + rank
    e = sum(Ns[:-1]) + rank * Ns[-1]
    return radii, Ns, a, e


def successive_minima(B):
    """Brute force: lambda_i is the smallest r whose lattice vectors of norm <= r span rank i."""
    n = len(B)
    # every minimum is at most the longest basis row R, and |k_i| <= R * |column i of B^-1|
    R = np.linalg.norm(B, axis=1).max()
    box = [int(math.ceil(R * np.linalg.norm(c) + 1e-9)) for c in np.linalg.inv(B).T]
    ks = np.array([k for k in itertools.product(*[range(-m, m + 1) for m in box]) if any(k)])
    V = ks @ B
    order = np.argsort(np.linalg.norm(V, axis=1), kind="stable")
    chosen, out = [], []
    for i in order:
        trial = chosen + [V[i]]
        if np.linalg.matrix_rank(np.array(trial), tol=1e-9) == len(trial):
            chosen = trial
            out.append(float(np.linalg.norm(V[i])))
            if len(out) == n:
                break
    return out


def random_basis(rng, n):
    while True:
        B = rng.normal(size=(n, n))
        if abs(np.linalg.det(B)) > 0.3:
            return B
