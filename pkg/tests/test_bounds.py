import itertools
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chunknet.bounds import (
    CONVENTIONS,
    TABLE_ROWS,
    BoundInputs,
    bottleneck,
    ccp_delay_bound,
    delay_bound,
    feasibility,
    gamma_star,
    minimize_w,
    overhead_table,
    partition_scheme,
    poisson_adjust,
)
from oracles import thm1_by_hand


def test_gamma_star_example():
    expect = math.sqrt(0.02 * math.log(200))
    assert gamma_star(100, 10, 0.1) == pytest.approx(expect, rel=1e-9)
    assert round(expect, 4) == 0.3255


def test_gamma_star_decreases_with_eps():
    vals = [gamma_star(100, 10, e) for e in (0.001, 0.01, 0.1, 0.5)]
    assert vals == sorted(vals, reverse=True)


def test_gamma_star_boundary_flagged():
    w_T, eps = 6, 0.05
    phi = 2 * math.log(2 * w_T / eps)
    assert gamma_star(phi, w_T, eps) == pytest.approx(1.0)
    inp = BoundInputs(k=64, L=2, eps=eps, p=1.0)
    scheme = partition_scheme(inp, N_T=1.0, w=4)
    assert not scheme.valid


def test_thm1_example():
    inp = BoundInputs(k=1024, L=4, eps=0.01, p=0.5)
    rep = delay_bound(1, inp)
    w, value = thm1_by_hand(1024, 4, 0.01, 0.5)
    assert rep.w == w == 10
    assert rep.value == pytest.approx(value, rel=1e-9)
    assert 3.80e3 < rep.value < 3.82e3
    assert rep.capacity_time == 2048
    assert rep.conventions == CONVENTIONS


GRID = [
    dict(k=k, L=L, eps=eps, p=p)
    for k, L, eps, p in itertools.islice(
        itertools.product([64, 512, 4096, 65536, 10**6], [1, 2, 5, 9], [0.01, 0.2], [0.3, 1.0]), 0, None, 4
    )
]


def test_grid_size():
    assert len(GRID) == 20


@pytest.mark.parametrize("kw", GRID)
def test_thm5_with_one_chunk_is_thm1(kw):
    a = delay_bound(1, BoundInputs(**kw))
    b = delay_bound(5, BoundInputs(q=1, **kw))
    assert a.value == b.value and a.w == b.w


def test_thm3_vs_thm1_exploratory():
    violations = []
    for kw in GRID:
        inp = BoundInputs(gamma_e=0.1, **kw)
        if delay_bound(3, inp).value > delay_bound(1, inp).value:
            violations.append(kw)
    print(f"thm3 > thm1 at {len(violations)} of {len(GRID)} grid points")


def test_q_raises_bound():
    inp = BoundInputs(k=4096, L=3, eps=0.01, p=0.7, q=16)
    assert delay_bound(5, inp).value > delay_bound(1, inp).value


def test_infeasible_w_flag():
    rep = delay_bound(2, BoundInputs(k=64, L=8, eps=0.01))
    assert rep.w == 8
    assert any("infeasible w" in f for f in rep.flags)


def test_theorem_range():
    with pytest.raises(ValueError):
        delay_bound(9, BoundInputs(k=64, L=1, eps=0.1))
    with pytest.raises(ValueError):
        delay_bound(3, BoundInputs(k=64, L=1, eps=0.1))  # needs gamma_e


def test_ccp_example():
    inp = BoundInputs(k=1000, L=2, eps=0.01, p=0.4, gamma_a=0.05, gamma_b=0.05, gamma_c=0.1, c=0.0)
    rep = ccp_delay_bound(inp)
    assert rep.value == pytest.approx(1.1 * 1.0525 * 1000 / 0.4, rel=1e-9)


def test_ccp_without_gamma_b():
    inp = BoundInputs(k=1000, L=2, eps=0.01, p=0.4, gamma_a=0.05, gamma_b=0.0, gamma_c=0.1)
    assert ccp_delay_bound(inp).value == pytest.approx(1.1 * 1000 / 0.4, rel=1e-12)


def test_gamma_o_decomposition():
    inp = BoundInputs(k=500, L=2, eps=0.01, gamma_a=0.1, gamma_b=0.2, gamma_c=0.3, c=1.0)
    ex = ccp_delay_bound(inp).extras
    assert ex["gamma_o_prime"] == pytest.approx(1.1 * 0.2 + 0.04)
    assert ex["gamma_o"] == pytest.approx(0.3 + 1.3 * ex["gamma_o_prime"])
    assert ex["precode_rate_construction"] == pytest.approx(1 - 0.22)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.01, 0.4), st.floats(0.01, 0.4), st.floats(0.01, 0.4),
    st.sampled_from(["gamma_a", "gamma_b", "gamma_c"]), st.floats(0.001, 0.1),
)
def test_ccp_increasing_in_each_gamma(ga, gb, gc, which, delta):
    base = dict(k=4096, L=2, eps=0.01, p=0.8, gamma_a=ga, gamma_b=gb, gamma_c=gc)
    bumped = dict(base, **{which: base[which] + delta})
    assert ccp_delay_bound(BoundInputs(**bumped)).value > ccp_delay_bound(BoundInputs(**base)).value


def test_dense_end_q_condition():
    k, L, eps = 1 << 16, 3, 0.01
    rep = feasibility(BoundInputs(k=k, L=L, eps=eps), "thm1")
    assert rep.ratios["q_capacity"] == pytest.approx(L * math.log2(k * L / eps) / k)
    assert rep.ratios["q_capacity"] < 0.01


def test_dense_code_violates_lemma5():
    rep = feasibility(BoundInputs(k=4096, L=2, eps=0.01, gamma_a=0.1, gamma_b=0.1), "lemma5")
    assert rep.ratios["lemma5"] > 1
    assert rep.warnings


@pytest.mark.parametrize("scenario", ["thm1", "thm2", "thm5", "thm6"])
def test_q_conditions_shrink_with_k(scenario):
    a = feasibility(BoundInputs(k=4096, L=3, eps=0.01, q=4), scenario).ratios
    b = feasibility(BoundInputs(k=8192, L=3, eps=0.01, q=4), scenario).ratios
    for name in a:
        assert b[name] < a[name]


def test_unknown_scenario():
    with pytest.raises(ValueError):
        feasibility(BoundInputs(k=64, L=1, eps=0.1), "thm13")


def test_missing_parameter_reported():
    rep = feasibility(BoundInputs(k=64, L=2, eps=0.1), "thm3")
    assert any("not evaluated" in w for w in rep.warnings)


def test_poisson_adjust():
    inp = BoundInputs(k=100, L=2, eps=0.1)
    assert poisson_adjust(inp, [(1.0, 0.9), (1.0, 0.6)]).p == pytest.approx(0.6)
    links = [(0.5, 0.8), (1.0, 0.3)]
    assert bottleneck(links) == 1
    assert poisson_adjust(inp, links).p == pytest.approx(0.3)
    single = BoundInputs(k=100, L=1, eps=0.1)
    assert poisson_adjust(single, [(0.5, 0.8)]).p == pytest.approx(0.4)


def test_from_links():
    inp = BoundInputs.from_links(256, 0.05, [0.7, 0.9, 0.8])
    assert inp.L == 3 and inp.p == 0.7
    assert inp.gamma_e == pytest.approx(0.1)
    assert BoundInputs.from_links(256, 0.05, [0.5, 0.5]).gamma_e is None


def test_pure_and_serializable():
    inp = BoundInputs(k=4096, L=2, eps=0.01, q=64, p=0.8, gamma_e=0.1, gamma_a=0.1, gamma_b=0.1, gamma_c=0.2)
    for thm in range(1, 9):
        a, b = delay_bound(thm, inp).to_json(), delay_bound(thm, inp).to_json()
        assert a == b
        json.loads(a)
    doc = json.loads(ccp_delay_bound(inp).to_json())
    assert doc["inputs"]["k"] == 4096


def test_table_rows():
    inp = BoundInputs(k=4096, L=2, eps=0.01, q=128, p=0.8, gamma_e=0.1, gamma_a=0.1, gamma_b=0.1, gamma_c=0.2)
    rows = {r: overhead_table(r, inp) for r in TABLE_ROWS}
    assert rows["I.det.eta"].value == rows["I.det.etabar"].value
    assert rows["I.arb.etabar"].value < rows["I.arb.eta"].value
    gamma_o = ccp_delay_bound(inp).extras["gamma_o"]
    assert rows["II.arb.eta"].value == pytest.approx(gamma_o * 4096 / 0.8)
    for r in rows.values():
        assert r.value > 0 and math.isfinite(r.value)
    with pytest.raises(ValueError):
        overhead_table("III.det", inp)


def test_minimize_w_not_worse():
    inp = BoundInputs(k=2048, L=3, eps=0.01, p=0.6)
    w, v = minimize_w(1, inp, w_max=200)
    assert v <= delay_bound(1, inp).value
    assert w >= 3


def test_input_validation():
    with pytest.raises(ValueError):
        BoundInputs(k=0, L=1, eps=0.1)
    with pytest.raises(ValueError):
        BoundInputs(k=10, L=1, eps=1.5)
    with pytest.raises(ValueError):
        BoundInputs(k=10, L=1, eps=0.1, f_choice="cubic")
