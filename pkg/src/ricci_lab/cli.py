"""Command-line experiment runner.

    python -m ricci_lab <experiment> --config FILE [--seed N] [--out DIR] [--log2] [--key=value ...]

The config is a flat ``key=value`` file (``#`` starts a comment); command-line
``--key=value`` pairs override it.  Each run writes ``<experiment>.csv`` (a
header, one row per record and a trailing ``# summary`` line), optional
``<experiment>.jsonl`` traces and ``manifest.txt`` into the output directory.

Exit status: 0 all records pass, 1 some fail, 2 bad config, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .bounds import BoundInputs, betti_bound, pi1_generator_bound
from .comparison import CSV_COLUMNS as TRIANGLE_COLUMNS
from .comparison import check_toponogov, estimate_rac, report_row, sample_triangles
from .critical import CSV_COLUMNS as CRITICAL_COLUMNS
from .critical import is_critical
from .errors import ConfigError, GeometryError
from .excess import CSV_COLUMNS as EXCESS_COLUMNS
from .excess import check_regular_point, distances, excess_values
from .fibration import ANGLE_COLUMNS, GRID_COLUMNS, build_coupling, build_fibration, grid_report, random_angle_transfers
from .geodesics import estimate_conjugate_radius
from .lattice import DeckLattice
from .manifolds import from_id
from .pi1_basis import short_basis, verify_basis_properties

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SEED_SCHEME = "int(SeedSequence([master_seed, crc32(label)]).generate_state(1, uint64)[0])"


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _point(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(" ", "").split(",")])
    except ValueError as exc:
        raise ValueError(f"expected comma-separated numbers, got {text!r}") from exc


def _matrix(text: str) -> np.ndarray:
    rows = [_point(r) for r in text.split(";")]
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"ragged matrix {text!r}")
    return np.array(rows)


def _number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    if text.lower() in ("pi", "+pi"):
        return math.pi
    return float(text)


def _flag(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


REQUIRED = object()


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    out: Path = Path("runs")
    log2: bool = False
    raw: dict = field(default_factory=dict)


def read_config_file(path: str | Path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def substream_seed(master: int, label: str) -> int:
    """Seed for one named random stream, derived from the master seed only."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(label.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


@dataclass
class Outcome:
    columns: list
    rows: list
    passed: list
    summary: dict = field(default_factory=dict)
    traces: list = field(default_factory=list)
    text: str = ""


def _fmt_point(v) -> str:
    return " ".join(repr(float(x)) for x in np.asarray(v, float).ravel())


def run_toponogov(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    tris = sample_triangles(
        M, P["n_triangles"], P["radius"], substream_seed(cfg.seed, "triangles"), P["method"], P["center_margin"]
    )
    rows, ok = [], []
    for t in tris:
        rep = check_toponogov(t, P["mu"])
        rows.append(report_row(M.id, P["radius"], t, rep))
        ok.append(rep.passed)
    return Outcome(TRIANGLE_COLUMNS, rows, ok)


def run_rac(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    est = estimate_rac(
        M, P["p"], P["mu"], P["r_max"], P["n_triangles"], substream_seed(cfg.seed, "rac"), P["method"], detail=True
    )
    rows = [{"manifold": M.id, "p": _fmt_point(P["p"]), "radius": r, "passed": int(ok)} for r, ok in est.history]
    return Outcome(["manifold", "p", "radius", "passed"], rows, [True] * len(rows), {"rac": est.value})


def run_conj(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    est = estimate_conjugate_radius(M, P["n_samples"], P["horizon"], substream_seed(cfg.seed, "conjugate"), detail=True)
    rows = [{"index": k, "first_conjugate_time": "" if math.isinf(t) else t} for k, t in enumerate(est.times)]
    summary = {"estimate": "inf" if math.isinf(est.value) else est.value, "discarded": est.n_discarded}
    return Outcome(["index", "first_conjugate_time"], rows, [True] * len(rows), summary)


def run_critical(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    p = M.check_point(P["p"])
    if P["q"] is not None:
        Q = np.atleast_2d(P["q"])
    else:
        Q = M.sample_points(np.random.default_rng(substream_seed(cfg.seed, "critical")), P["n_samples"])
    rows = [is_critical(M, p, q, P["tol_extra"], method=P["method"]).row() for q in Q]
    return Outcome(CRITICAL_COLUMNS, rows, [True] * len(rows), {"critical": sum(r["is_critical"] for r in rows)})


def run_betti(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    inputs = BoundInputs(P["n"], P["H"], P["r0"], P["D"], P["rac"])
    value, trace = betti_bound(inputs, P["base_divisor"])
    pi1 = pi1_generator_bound(inputs, detail=True)
    cols = ["level", "radius", "eps", "N", "kind", "factor_a", "factor_e", "content_log2"]
    rows = [{c: getattr(lv, c) for c in ("level", "radius", "eps", "N", "kind", "factor_a", "factor_e", "content_log2")}
            for lv in trace.levels]  # fmt: skip
    summary = {"rank": trace.rank, "pi1_generators": pi1.value}
    summary["bound"] = repr(value.log2) if cfg.log2 else str(value)
    summary["bound_format"] = "log2" if cfg.log2 else "(n+1)^a*2^e"
    return Outcome(cols, rows, [True] * len(rows), summary, [trace.to_jsonl()], trace.table())


def run_pi1(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    L = DeckLattice(P["basis"])
    b = short_basis(L, P["length_cap"])
    rep = verify_basis_properties(b)
    rows = b.rows()
    cols = ["index"] + [f"k{i}" for i in range(L.dim)] + ["length"]
    summary = {"generates": int(b.generates), "properties": "pass" if rep.passed else f"fail:{rep.first_violation}"}
    return Outcome(cols, rows, [rep.passed] * max(1, len(rows)), summary)


def run_excess(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    X = M.sample_points(np.random.default_rng(substream_seed(cfg.seed, "excess")), P["n_samples"])
    e = excess_values(M, P["p0"], P["p1"], X, P["method"])
    rows = [
        {"p0": _fmt_point(P["p0"]), "p1": _fmt_point(P["p1"]), "x": _fmt_point(x), "e": float(v),
         "min_angle": "", "predicted_bound": "", "regular": ""}
        for x, v in zip(X, e)
    ]  # fmt: skip
    j = int(np.argmax(e))
    return Outcome(EXCESS_COLUMNS, rows, [bool(v >= 0) for v in e], {"max_excess": float(e[j]), "argmax": _fmt_point(X[j])})


def run_regularity(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    M = from_id(P["manifold"])
    p, q = M.check_point(P["p"]), M.check_point(P["q"])
    rng = np.random.default_rng(substream_seed(cfg.seed, "regularity"))
    xs: list[np.ndarray] = []
    while len(xs) < P["n_points"]:
        X = M.sample_points(rng, 4 * P["n_points"])
        X = X[M.chart_margin(X) > 1e-2]
        dp = distances(M, np.broadcast_to(p, X.shape), X, P["method"])
        dq = distances(M, np.broadcast_to(q, X.shape), X, P["method"])
        xs.extend(X[(dp >= P["delta"]) & (dq >= P["delta"])][: P["n_points"] - len(xs)])
    rows, ok = [], []
    for x in xs:
        rep = check_regular_point(M, p, q, x, P["delta"], P["rac"], method=P["method"])
        rows.append(rep.row(p, q))
        ok.append(rep.regular)
    return Outcome(EXCESS_COLUMNS, rows, ok, {"min_angle": min(r["min_angle"] for r in rows)})


def _coupling(cfg: ExperimentConfig):
    P = cfg.params
    M, N = from_id(P["manifold"]), from_id(P["target"])
    c = build_coupling(M, N, P["cross"], P["eps"], substream_seed(cfg.seed, "net"))
    return M, N, c


def run_fibration(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    _, _, c = _coupling(cfg)
    fm = build_fibration(c, P["sigma"], P["r0"], None, substream_seed(cfg.seed, "quadrature"))
    g = grid_report(fm, P["grid"], bool(P["submersion"]), P["fd_step"])
    rows = list(g.rows())
    ok = [bool(d <= 5 * P["eps"]) and (not P["submersion"] or s > 0) for d, s in zip(g.displacement, g.min_singular)]
    summary = {"max_displacement": float(g.displacement.max()), "reach": fm.reach, "net_size": c.size}
    if P["submersion"]:
        summary["min_singular_value"] = float(g.min_singular.min())
    trace = json.dumps({"record": "coupling", **c.report(), "sigma": fm.sigma, "R": fm.R, "reach": fm.reach}, sort_keys=True)
    return Outcome(GRID_COLUMNS, rows, ok, summary, [trace + "\n"])


def run_angle_transfer(cfg: ExperimentConfig) -> Outcome:
    P = cfg.params
    _, _, c = _coupling(cfg)
    nu = P["nu"] if P["nu"] is not None else 2 * P["eps"]
    recs = random_angle_transfers(c, P["n_pairs"], P["length"], P["mu"], nu, substream_seed(cfg.seed, "angles"))
    rows = [r.row() for r in recs]
    return Outcome(ANGLE_COLUMNS, rows, [True] * len(rows), {"median_defect": float(np.median([r.defect for r in recs]))})


MU = 18 / 19
SPHERE = "sphere:n=2,K=1"
TORUS8 = "torus:basis=[[8,0],[0,8]]"

SCHEMAS: dict[str, tuple[Callable, dict]] = {
    "toponogov-check": (run_toponogov, {
        "manifold": (str, SPHERE), "n_triangles": (int, 200), "radius": (_number, 0.5), "mu": (_number, MU),
        "method": (str, "auto"), "center_margin": (_number, 0.0)}),
    "rac-estimate": (run_rac, {
        "manifold": (str, REQUIRED), "p": (_point, REQUIRED), "mu": (_number, MU), "r_max": (_number, 1.0),
        "n_triangles": (int, 50), "method": (str, "auto")}),
    "conj-radius": (run_conj, {"manifold": (str, REQUIRED), "n_samples": (int, 64), "horizon": (_number, 10.0)}),
    "critical-scan": (run_critical, {
        "manifold": (str, REQUIRED), "p": (_point, REQUIRED), "q": (_point, None), "n_samples": (int, 20),
        "tol_extra": (_number, 1e-3), "method": (str, "shooting")}),
    "betti-bound": (run_betti, {
        "n": (int, REQUIRED), "H": (_number, REQUIRED), "r0": (_number, REQUIRED), "D": (_number, REQUIRED),
        "rac": (_number, REQUIRED), "base_divisor": (_number, 20.0)}),
    "pi1-basis": (run_pi1, {"basis": (_matrix, REQUIRED), "length_cap": (_number, None)}),
    "excess-scan": (run_excess, {
        "manifold": (str, REQUIRED), "p0": (_point, REQUIRED), "p1": (_point, REQUIRED), "n_samples": (int, 1000),
        "method": (str, "auto")}),
    "sphere-regularity": (run_regularity, {
        "manifold": (str, SPHERE), "p": (_point, np.array([1.0, 0.3])), "q": (_point, np.array([math.pi - 1.0, 0.3 + math.pi])),
        "delta": (_number, 0.1), "n_points": (int, 50), "rac": (_number, None), "method": (str, "auto")}),
    "fibration-demo": (run_fibration, {
        "manifold": (str, TORUS8), "target": (str, TORUS8), "cross": (str, "identity-chart"), "eps": (_number, 0.2),
        "sigma": (_number, 0.9), "r0": (_number, None), "grid": (int, 20), "submersion": (_flag, True),
        "fd_step": (_number, 1e-4)}),
    "angle-transfer": (run_angle_transfer, {
        "manifold": (str, "ctorus:amp=0.05,basis=[[8,0],[0,8]]"), "target": (str, TORUS8), "cross": (str, "identity-chart"),
        "eps": (_number, 0.2), "n_pairs": (int, 50), "length": (_number, 0.5), "mu": (_number, MU), "nu": (_number, None)}),
}  # fmt: skip


def validate(experiment: str, raw: dict) -> dict:
    if experiment not in SCHEMAS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}; choose from {', '.join(SCHEMAS)}")
    schema = SCHEMAS[experiment][1]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"{unknown[0]}: not a parameter of {experiment}")
    params = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            try:
                params[key] = kind(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        elif default is REQUIRED:
            raise ConfigError(f"{key}: required by {experiment}")
        else:
            params[key] = default
    return params


def parse_args(argv: list[str]) -> ExperimentConfig:
    ap = argparse.ArgumentParser(prog="ricci-lab", description="Run a seeded comparison-geometry experiment.")
    ap.add_argument("experiment")
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--log2", action="store_true")
    ns, rest = ap.parse_known_args(argv)
    raw = read_config_file(ns.config) if ns.config else {}
    for item in rest:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"{item}: overrides must look like --key=value")
        k, v = item[2:].split("=", 1)
        raw[k.replace("-", "_")] = v
    named = raw.pop("experiment", ns.experiment)
    if named != ns.experiment:
        raise ConfigError(f"experiment: config names {named!r} but {ns.experiment!r} was requested")
    seed = raw.pop("seed", 0)
    out = raw.pop("out", None)
    log2 = _flag(raw.pop("log2", "0")) or ns.log2
    try:
        seed = int(ns.seed if ns.seed is not None else seed)
    except ValueError as exc:
        raise ConfigError(f"seed: {exc}") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must be a 64-bit unsigned integer")
    params = validate(ns.experiment, raw)
    out_dir = Path(ns.out or out or Path("runs") / ns.experiment)
    return ExperimentConfig(ns.experiment, params, seed, out_dir, log2, dict(raw))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def render_csv(out: Outcome) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(out.columns)
    for row in out.rows:
        w.writerow([_cell(row.get(c, "")) for c in out.columns])
    n_pass = sum(bool(x) for x in out.passed)
    extra = "".join(f" {k}={_cell(v)}" for k, v in out.summary.items())
    buf.write(f"# summary: passed={n_pass} total={len(out.passed)}{extra}\n")
    return buf.getvalue()


def render_manifest(cfg: ExperimentConfig, files: list[str], status: int) -> str:
    lines = [
        f"experiment: {cfg.experiment}",
        f"seed: {cfg.seed}",
        f"seed_scheme: {SEED_SCHEME}",
        f"log2: {int(cfg.log2)}",
    ]
    lines += [f"param.{k}: {_cell(v) if not isinstance(v, np.ndarray) else _fmt_point(v)}" for k, v in sorted(cfg.params.items())]
    lines += [
        f"version.ricci_lab: {__version__}",
        f"version.python: {platform.python_version()}",
        f"version.numpy: {np.__version__}",
        f"version.scipy: {scipy.__version__}",
    ]
    lines += [f"output: {f}" for f in files]
    lines.append(f"exit_status: {status}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    runner = SCHEMAS[cfg.experiment][0]
    out = runner(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    files = [f"{cfg.experiment}.csv"]
    (cfg.out / files[0]).write_text(render_csv(out))
    if out.traces:
        files.append(f"{cfg.experiment}.jsonl")
        (cfg.out / files[1]).write_text("".join(out.traces))
    status = EXIT_PASS if all(out.passed) else EXIT_FAIL
    (cfg.out / "manifest.txt").write_text(render_manifest(cfg, files, status))
    if out.text:
        print(out.text, file=stdout)
    n_pass = sum(bool(x) for x in out.passed)
    print(f"{cfg.experiment}: {n_pass}/{len(out.passed)} passed; outputs in {cfg.out}", file=stdout)
    return status


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except ConfigError as exc:
        print(f"config-invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run_experiment(cfg)
    except ConfigError as exc:
        print(f"config-invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeometryError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime-error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
