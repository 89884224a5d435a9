"""Run every CLI experiment once with a fixed seed and report exit codes.

Run: python3 scripts/run_experiments.py [--out runs] [--seed 0] [--quick]
"""

import argparse
import time
from pathlib import Path

from ricci_lab.cli import main as cli_main

FULL = {
    "toponogov-check": ["--n_triangles=200"],
    "rac-estimate": ["--manifold=hyperbolic:n=2,K=-1", "--p=0,0", "--r_max=0.99"],
    "conj-radius": ["--manifold=sphere:n=2,K=4"],
    "critical-scan": ["--manifold=torus:n=2", "--p=0,0", "--q=0.5,0.5"],
    "betti-bound": ["--n=2", "--H=0", "--r0=1", "--D=1", "--rac=0.4"],
    "pi1-basis": ["--basis=1,0;0.5,0.8660254037844386"],
    "excess-scan": ["--manifold=ellipsoid:a=1,b=1,c=0.8", "--p0=1.5707963267948966,0", "--p1=1.5707963267948966,3.141592653589793"],
    "sphere-regularity": [],
    "fibration-demo": [],
    "angle-transfer": [],
}
QUICK = {
    "toponogov-check": ["--n_triangles=20"],
    "excess-scan": FULL["excess-scan"] + ["--n_samples=100"],
    "fibration-demo": ["--grid=5"],
    "angle-transfer": ["--n_pairs=5"],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="smaller sample counts")
    args = ap.parse_args()
    worst = 0
    for name, extra in FULL.items():
        extra = QUICK.get(name, extra) if args.quick else extra
        start = time.perf_counter()
        status = cli_main([name, *extra, f"--seed={args.seed}", f"--out={Path(args.out) / name}"])
        print(f"[{name}] exit {status} in {time.perf_counter() - start:.1f}s")
        worst = max(worst, status)
    return worst


if __name__ == "__main__":
    raise SystemExit(main())
