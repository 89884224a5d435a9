import json
import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import hand_unrolled
from ricci_lab.bounds import (
    BoundInputs,
    PowerProduct,
    betti_bound,
    covering_number,
    model_volume,
    pi1_generator_bound,
    rank_bound,
    recompute_level,
)
from ricci_lab.critical import cpe_angle_lower_bound, packing_count
from ricci_lab.errors import InvalidInput


def test_model_volume_examples():
    assert model_volume(2, 0.0, 1.7) == pytest.approx(math.pi * 1.7**2, rel=1e-14)
    assert model_volume(3, 1.0, math.pi) == pytest.approx(2 * math.pi**2, rel=1e-12)
    assert model_volume(2, -1.0, 1.0) == pytest.approx(2 * math.pi * (math.cosh(1) - 1), rel=1e-12)


@pytest.mark.parametrize("n,H", [(2, 1.0), (3, -1.0), (4, 0.5), (5, -2.0)])
@pytest.mark.parametrize("r", [1e-4, 0.3, 1.5])
def test_model_volume_against_quadrature(n, H, r):
    mpmath.mp.dps = 30
    k = mpmath.sqrt(abs(H))
    f = (lambda t: mpmath.sin(k * t) / k) if H > 0 else (lambda t: mpmath.sinh(k * t) / k)
    area = 2 * mpmath.pi ** (mpmath.mpf(n) / 2) / mpmath.gamma(mpmath.mpf(n) / 2)
    exact = area * mpmath.quad(lambda t: f(t) ** (n - 1), [0, r])
    assert model_volume(n, H, r) == pytest.approx(float(exact), rel=1e-11)


def test_covering_number_examples():
    assert covering_number(2, 0.0, 1.0, 1.0)[0] == 9
    assert covering_number(2, 0.0, 0.4, 0.1)[0] == 81
    for r, eps in ((1.0, 0.3), (2.5, 0.01), (0.7, 0.7)):
        assert covering_number(2, 0.0, r, eps)[0] == math.ceil((2 * r / eps + 1) ** 2 - 1e-9)
    with pytest.raises(InvalidInput):
        covering_number(2, 0.0, 1.0, 2.0)


def test_rank_bound_values():
    mpmath.mp.dps = 40
    s = mpmath.sin(mpmath.pi / 36)
    theta = mpmath.mpf(18) / 19 * mpmath.acos(s + (1 + s) * 4 / 5)
    assert rank_bound(2) == int(mpmath.floor(2 * mpmath.pi / theta)) == 22
    assert rank_bound(3) == math.floor(packing_count(3, cpe_angle_lower_bound(1.25)))
    assert all(rank_bound(n + 1) >= rank_bound(n) for n in range(2, 7))


def test_betti_bound_matches_hand_unroll():
    value, trace = betti_bound(BoundInputs(2, 0.0, 1.0, 1.0, 0.4))
    radii, Ns, a, e = hand_unrolled(2, 0.0, 1.0, 0.4)
    assert [lv.N for lv in trace.levels] == Ns == [4004001] * 3
    assert [lv.radius for lv in trace.levels] == pytest.approx(radii)
    assert [lv.kind for lv in trace.levels] == ["recursive", "recursive", "base"]
    assert (value.n, value.a, value.e) == (2, a, e) == (2, 24, 96096024)
    for i in range(len(trace.levels)):
        assert recompute_level(trace, i) == trace.levels[i]


def test_betti_bound_single_base_level():
    inputs = BoundInputs(3, 0.0, 1.0, 1.0, 100.0)
    value, trace = betti_bound(inputs)
    assert len(trace.levels) == 1
    N = 20001**3
    assert abs(N - covering_number(3, 0.0, 2.0, 2.0e-4)[0]) <= 1e-9 * N
    r = rank_bound(3)
    assert (value.a, value.e) == (r, r * N)


def test_betti_trace_jsonl_round_trip():
    value, trace = betti_bound(BoundInputs(2, 0.0, 1.0, 1.0, 0.4))
    records = [json.loads(line) for line in trace.to_jsonl().splitlines()]
    assert records[0]["record"] == "constants" and records[0]["rank"] == 22
    assert [r["N"] for r in records if r["record"] == "level"] == [4004001] * 3
    assert records[-1]["a"] == value.a and records[-1]["e"] == value.e


def test_power_product_arithmetic():
    x = PowerProduct(2, 3, 5)
    assert x.exact() == 27 * 32
    assert x.log2 == pytest.approx(math.log2(27 * 32))
    assert str(x * PowerProduct(2, 1, 1)) == "3^4 * 2^6"
    assert PowerProduct(2, 1, 10**9).exact(max_bits=1000) is None


inputs_strategy = st.tuples(
    st.integers(2, 4), st.sampled_from([-1.0, 0.0, 1.0]), st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(0.05, 3.0)
)


@settings(max_examples=25)
@given(inputs_strategy, st.floats(1.01, 3.0))
def test_betti_bound_monotone(args, factor):
    n, H, r0, D, rac = args
    base = betti_bound(BoundInputs(n, H, r0, D, rac))[0].log2
    assert betti_bound(BoundInputs(n, H, r0, D * factor, rac))[0].log2 >= base
    assert betti_bound(BoundInputs(n, H, r0, D, rac * factor))[0].log2 <= base
    assert betti_bound(BoundInputs(n, H - 0.5, r0, D, rac))[0].log2 >= base
    assert betti_bound(BoundInputs(n, H, r0 * factor, D, rac))[0].log2 == base


def test_betti_bound_search_never_beaten_by_deeper_base_levels():
    inputs = BoundInputs(2, -1.0, 1.0, 3.0, 2.0)
    value, trace = betti_bound(inputs)
    rank = trace.rank
    radii = [6.0 / 10**k for k in range(12)]
    Ns = [max(4004001, covering_number(2, -1.0, r, r / 1000)[0]) for r in radii]
    first = next(k for k, r in enumerate(radii) if r <= 0.1 * (1 + 1e-12))
    sizes = [(k + rank) * math.log2(3) + sum(Ns[:k]) + rank * Ns[k] for k in range(first, 12)]
    assert value.log2 == pytest.approx(min(sizes), rel=1e-15)
    assert trace.levels[-1].kind == "base" and trace.levels[-1].radius <= 0.1


def test_betti_bound_valid_on_round_sphere():
    value, _ = betti_bound(BoundInputs(2, 1.0, math.pi, math.pi, 1.0))
    assert value.log2 >= 1  # sum of Betti numbers of S^2 is 2


def test_pi1_generator_bound():
    b = pi1_generator_bound(BoundInputs(2, 0.0, 1.0, 1.0, 0.4), detail=True)
    assert b.per_ball == 6
    assert b.value == 6 * b.balls
    assert b.r1 == pytest.approx(0.4 / 6)
    assert b.balls == covering_number(2, 0.0, 1.0, 0.4 / 6)[0]
    # the flat unit torus has diameter sqrt(2)/2 and needs two generators
    assert pi1_generator_bound(BoundInputs(2, 0.0, 0.5, math.sqrt(0.5), 10.0)) >= 2


@given(inputs_strategy, st.floats(1.01, 3.0))
def test_pi1_bound_nonincreasing_in_radii(args, factor):
    n, H, r0, D, rac = args
    base = pi1_generator_bound(BoundInputs(n, H, r0, D, rac))
    assert pi1_generator_bound(BoundInputs(n, H, r0 * factor, D, rac)) <= base
    assert pi1_generator_bound(BoundInputs(n, H, r0, D, rac * factor)) <= base


def test_bound_inputs_validation():
    with pytest.raises(InvalidInput):
        BoundInputs(1, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        BoundInputs(2, 0.0, 1.0, -1.0, 1.0)
