"""Bishop-Gromov model volumes, covering numbers and the Betti / pi_1 bound calculators.

The Betti bound is astronomically large, so it is carried exactly as
(n + 1)^A * 2^E with integer exponents; ``log2`` gives its size.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from scipy.integrate import quad

from .critical import cpe_angle_lower_bound, packing_count
from .errors import InvalidInput
from .manifolds import sphere_volume

RANK_GROWTH = 5 / 4
BASE_DIVISOR = 20
LEVEL_FACTOR = 10
SMALL_ARGUMENT = 1.0


def robust_ceil(x: float, rel: float = 1e-9) -> int:
    """Ceiling that ignores relative roundoff above an integer (9.000000000002 -> 9)."""
    return math.ceil(x - rel * abs(x))


def robust_floor(x: float, rel: float = 1e-9) -> int:
    return math.floor(x + rel * abs(x))


def _sin_power_integral(m: int, x: float) -> float:
    if x < SMALL_ARGUMENT:
        return quad(lambda t: math.sin(t) ** m, 0.0, x, epsabs=0.0, epsrel=5e-14, limit=200)[0]
    s, c = math.sin(x), math.cos(x)
    prev, cur = x, 1 - c
    if m == 0:
        return prev
    for k in range(2, m + 1):
        prev, cur = cur, -(s ** (k - 1)) * c / k + (k - 1) / k * prev
    return cur


def _sinh_power_integral(m: int, x: float) -> float:
    if x < SMALL_ARGUMENT:
        return quad(lambda t: math.sinh(t) ** m, 0.0, x, epsabs=0.0, epsrel=5e-14, limit=200)[0]
    s, c = math.sinh(x), math.cosh(x)
    prev, cur = x, c - 1
    if m == 0:
        return prev
    for k in range(2, m + 1):
        prev, cur = cur, s ** (k - 1) * c / k - (k - 1) / k * prev
    return cur


def model_volume(n: int, H: float, r: float) -> float:
    """Volume of an r-ball in the simply connected n-dimensional space form of curvature H."""
    if n < 2 or not r > 0 or not math.isfinite(r):
        raise InvalidInput(f"model_volume needs n >= 2 and r > 0, got n={n}, r={r}")
    area = sphere_volume(n - 1)
    if H == 0:
        return area * r**n / n
    k = math.sqrt(abs(H))
    if H > 0:
        x = min(k * r, math.pi)
        return area * _sin_power_integral(n - 1, x) / k**n
    return area * _sinh_power_integral(n - 1, k * r) / k**n


def covering_number(n: int, H: float, r: float, eps: float) -> tuple[int, int]:
    """(N1, N2): count of eps-balls covering an r-ball, and the multiplicity of that cover."""
    if not 0 < eps <= r * (1 + 1e-12):
        raise InvalidInput(f"covering_number needs 0 < eps <= r, got eps={eps}, r={r}")
    small = model_volume(n, H, eps / 2)
    n1 = robust_ceil(model_volume(n, H, r + eps / 2) / small)
    n2 = robust_ceil(model_volume(n, H, 5 * eps / 2) / small)
    return n1, n2


@dataclass(frozen=True)
class BoundInputs:
    n: int
    H: float
    r0: float
    D: float
    rac: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise InvalidInput(f"n must be an integer >= 2, got {self.n}")
        for name in ("r0", "D", "rac"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidInput(f"{name} must be positive and finite, got {v}")


def rank_bound(inputs: BoundInputs | int) -> int:
    """Longest chain of critical points with distance growth 5/4, via cap packing."""
    n = inputs if isinstance(inputs, int) else inputs.n
    return robust_floor(packing_count(n, cpe_angle_lower_bound(RANK_GROWTH)))


@dataclass(frozen=True)
class PowerProduct:
    """The integer (n + 1)^a * 2^e."""

    n: int
    a: int
    e: int

    @property
    def log2(self) -> float:
        return self.a * math.log2(self.n + 1) + self.e

    def exact(self, max_bits: int = 1 << 20) -> int | None:
        """The integer itself, or None when it would exceed ``max_bits`` bits."""
        if self.log2 > max_bits:
            return None
        return (self.n + 1) ** self.a * 2**self.e

    def __mul__(self, other: PowerProduct) -> PowerProduct:
        return PowerProduct(self.n, self.a + other.a, self.e + other.e)

    def __str__(self):
        return f"{self.n + 1}^{self.a} * 2^{self.e}"


@dataclass
class LevelRecord:
    level: int
    radius: float
    eps: float
    N: int
    kind: str  # "recursive" or "base"
    factor_a: int
    factor_e: int
    content_a: int = 0
    content_e: int = 0
    content_log2: float = 0.0


@dataclass
class BoundTrace:
    inputs: BoundInputs
    start_radius: float
    base_threshold: float
    base_divisor: float
    rank: int
    theta: float
    packing: float
    levels: list[LevelRecord] = field(default_factory=list)
    value: PowerProduct | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def log2(self) -> float:
        return self.value.log2

    def to_jsonl(self) -> str:
        head = {
            "record": "constants",
            **asdict(self.inputs),
            "start_radius": self.start_radius,
            "base_threshold": self.base_threshold,
            "base_divisor": self.base_divisor,
            "rank": self.rank,
            "theta": self.theta,
            "packing": self.packing,
            "notes": self.notes,
        }
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps({"record": "level", **asdict(lv)}, sort_keys=True) for lv in self.levels]
        lines.append(
            json.dumps(
                {"record": "value", "base": self.inputs.n + 1, "a": self.value.a, "e": self.value.e, "log2": self.log2},
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        rows = [f"{'level':>5} {'radius':>12} {'N':>12} {'kind':>9} {'log2 cont':>16}"]
        for lv in self.levels:
            rows.append(f"{lv.level:>5} {lv.radius:>12.6g} {lv.N:>12d} {lv.kind:>9} {lv.content_log2:>16.6f}")
        rows.append(f"bound = {self.value}  (log2 = {self.log2:.6f})")
        return "\n".join(rows)


def level_factor(n: int, H: float, radius: float, kind: str, rank: int) -> tuple[int, int, int, float]:
    """(N, a, e, eps) for one level: (n+1) 2^N, raised to ``rank`` on the base level.

    N counts eps-balls covering an r-ball at curvature min(H, 0).  Lowering H
    only enlarges the Bishop-Gromov ratio, so this is still a valid count, and
    it makes N nondecreasing in r (at H > 0 the ratio shrinks as r grows).
    """
    eps = radius * 10.0 ** (-(n + 1))
    N = flat_level_count(n)
    if H < 0:
        N = max(N, covering_number(n, H, radius, eps)[0])
    power = rank if kind == "base" else 1
    return N, power, power * N, eps


def flat_level_count(n: int) -> int:
    """N1 at curvature 0 with eps = 10^{-(n+1)} r, in exact integer arithmetic: (2 10^{n+1} + 1)^n."""
    return (2 * 10 ** (n + 1) + 1) ** n


def _levels_with_base(n, H, start, k_base, rank) -> list[LevelRecord]:
    out = []
    for k in range(k_base + 1):
        kind = "base" if k == k_base else "recursive"
        N, a, e, eps = level_factor(n, H, start / LEVEL_FACTOR**k, kind, rank)
        out.append(LevelRecord(k, start / LEVEL_FACTOR**k, eps, N, kind, a, e))
    return out


def betti_bound(inputs: BoundInputs, base_divisor: float = BASE_DIVISOR) -> tuple[PowerProduct, BoundTrace]:
    """Upper bound on the total Betti number, unrolled from r = 2D down by factors of 10.

    B(r) = ((n+1) 2^{N(r)})^rank                 at the base level,
    B(r) = (n+1) 2^{N(r)} B(r / 10)              above it,
    with N(r) the covering number of an r-ball by 10^{-(n+1)} r balls.  The
    base case holds at every radius r <= rac / base_divisor; among those
    levels the one giving the smallest bound is used.  This makes the result
    nonincreasing in rac and, with N nondecreasing in r, nondecreasing in D.
    """
    n, H = inputs.n, inputs.H
    rank = rank_bound(inputs)
    theta = cpe_angle_lower_bound(RANK_GROWTH)
    start = 2 * inputs.D
    threshold = inputs.rac / base_divisor
    trace = BoundTrace(inputs, start, threshold, base_divisor, rank, theta, packing_count(n, theta))
    log_base = math.log2(n + 1)
    counts: list[int] = []

    def count(k):
        while len(counts) <= k:
            counts.append(level_factor(n, H, start / LEVEL_FACTOR ** len(counts), "recursive", rank)[0])
        return counts[k]

    k_first = 0
    while start / LEVEL_FACTOR**k_first > threshold * (1 + 1e-12):
        k_first += 1
    prefix = sum(count(j) for j in range(k_first))  # exponent of 2 from the recursive levels
    best_k, best = None, math.inf
    k = k_first
    # every count is at least the flat one, so a deeper base level can only win
    # while rank * (N_k - flat) exceeds the cost log2(n+1) + flat of one more level
    flat = flat_level_count(n)
    while True:
        size = (k + rank) * log_base + prefix + rank * count(k)
        if size < best:
            best_k, best = k, size
        if rank * (count(k) - flat) <= log_base + flat:
            break
        prefix += count(k)
        k += 1
    trace.levels = _levels_with_base(n, H, start, best_k, rank)
    trace.notes.append(f"base case allowed for r <= rac/{base_divisor:g}; first allowed level {k_first}, used level {best_k}")
    if H > 0:
        trace.notes.append("covering counts evaluated at curvature 0")
    total = PowerProduct(n, 0, 0)
    for lv in reversed(trace.levels):
        total = total * PowerProduct(n, lv.factor_a, lv.factor_e)
        lv.content_a, lv.content_e, lv.content_log2 = total.a, total.e, total.log2
    trace.value = total
    return total, trace


def recompute_level(trace: BoundTrace, index: int) -> LevelRecord:
    """Recompute one recorded level from the trace inputs alone."""
    lv = trace.levels[index]
    N, a, e, eps = level_factor(trace.inputs.n, trace.inputs.H, lv.radius, lv.kind, trace.rank)
    return LevelRecord(lv.level, lv.radius, eps, N, lv.kind, a, e, lv.content_a, lv.content_e, lv.content_log2)


@dataclass(frozen=True)
class Pi1Bound:
    value: int
    balls: int
    per_ball: int
    r1: float


def pi1_generator_bound(inputs: BoundInputs, detail: bool = False):
    """Covering count of the diameter ball by r1-balls times the per-ball short-basis bound."""
    n = inputs.n
    r1 = min(inputs.rac, inputs.r0) / 6
    balls = 1 if r1 >= inputs.D else covering_number(n, inputs.H, inputs.D, r1)[0]
    per_ball = robust_floor((19 / 3) ** (n - 1))
    out = Pi1Bound(balls * per_ball, balls, per_ball, r1)
    return out if detail else out.value
