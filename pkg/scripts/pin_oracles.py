"""Recompute the reference values the tests pin, each from an independent method.

Run: python3 scripts/pin_oracles.py [--quick]
"""

import argparse
import math

import mpmath
import numpy as np
from scipy.special import ellipe

from ricci_lab.critical import NU_THRESHOLD, cpe_angle_lower_bound
from ricci_lab.excess import max_excess
from ricci_lab.lattice import DeckLattice
from ricci_lab.manifolds import Ellipsoid, FlatTorus


def cpe_values():
    mpmath.mp.dps = 50
    s = mpmath.sin(mpmath.pi / 36)
    threshold = (1 + s) / (1 - s)
    print(f"cpe threshold: mpmath {mpmath.nstr(threshold, 20)}  library {NU_THRESHOLD!r}")
    for nu in (1.25, 2.0, 10.0):
        exact = mpmath.mpf(18) / 19 * mpmath.acos(s + (1 + s) / mpmath.mpf(nu))
        print(f"cpe({nu}): mpmath {mpmath.nstr(exact, 20)}  library {cpe_angle_lower_bound(nu)!r}")
    print(f"cpe limit: 17pi/38 = {17 * math.pi / 38!r}  library {cpe_angle_lower_bound(1e300)!r}")


def torus_excess(m):
    """Grid maximum of the excess on the unit torus for p0 = (0,0), p1 = (1/2,0)."""
    p0, p1 = np.zeros(2), np.array([0.5, 0.0])
    g = np.arange(m) / m
    X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)

    def d(a, b):
        v = b - a
        return np.linalg.norm(v - np.round(v), axis=-1)

    grid = float(np.max(d(p0, X) + d(p1, X) - 0.5))
    sampled = max_excess(FlatTorus(DeckLattice(np.eye(2))), p0, p1, 10_000, seed=0).value
    print(f"torus excess: grid {grid!r}  sqrt(2)/2 {math.sqrt(2) / 2!r}  library sample {sampled!r}")


def ellipsoid_excess(n):
    """Oblate ellipsoid (1,1,0.8): equatorial antipodes, excess peaks at the orthogonal equator points."""
    E = Ellipsoid(1.0, 1.0, 0.8)
    p0, p1 = np.array([math.pi / 2, 0.0]), np.array([math.pi / 2, math.pi])
    exact = math.pi - 2 * float(ellipe(1 - 0.8**2))
    sampled = max_excess(E, p0, p1, n, seed=0)
    print(f"ellipsoid excess: exact {exact!r}  library max over {n} samples {sampled.value!r} at {sampled.argmax}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--quick", action="store_true", help="use fewer ellipsoid samples")
    args = ap.parse_args()
    cpe_values()
    torus_excess(400)
    ellipsoid_excess(300 if args.quick else 3000)


if __name__ == "__main__":
    main()
