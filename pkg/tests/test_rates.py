from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netpromise.errors import InfeasibleProvisions, InvalidInput
from netpromise.flowsim import Flow, FlowClass, SimConfig, compute_rates, predict_completion
from netpromise.flowsim.rates import waterfill
from netpromise.topology import Path
from netpromise.units import GB, gbps

from conftest import chain_topology
from oracles import progressive_filling, reference_rates

G = 1e9


def prov(fid, hops, rate, **kw):
    return Flow(fid, FlowClass.PROVISIONED, Path(tuple(hops)), promised_rate=gbps(rate), promise="p-" + fid, **kw)


def be(fid, hops, cap=math.inf, **kw):
    return Flow(fid, FlowClass.BEST_EFFORT, Path(tuple(hops)), demand_cap=cap if cap == math.inf else gbps(cap), **kw)


def test_provision_and_capped_best_effort():
    topo = chain_topology(("a", "b", 10))
    cfg = SimConfig(best_effort_cap_under_provision=gbps(5), best_effort_floor=gbps(0.1))
    rates = compute_rates(topo, [prov("p", "ab", 7), be("b", "ab")], cfg)
    assert rates == {"p": 7 * G, "b": 3 * G}


def test_equal_share():
    topo = chain_topology(("a", "b", 10))
    rates = compute_rates(topo, [be(f"f{i}", "ab") for i in range(4)], SimConfig())
    assert all(r == pytest.approx(2.5 * G, rel=1e-12) for r in rates.values())


def test_two_link_bottleneck():
    topo = chain_topology(("A", "B", 10), ("B", "C", 4))
    rates = compute_rates(topo, [be("ac", "ABC"), be("bc", "BC")], SimConfig())
    assert rates["ac"] == pytest.approx(2 * G)
    assert rates["bc"] == pytest.approx(2 * G)
    assert 10 * G - rates["ac"] == pytest.approx(8 * G)


def test_cap_only_while_sharing_a_provisioned_link():
    topo = chain_topology(("a", "b", 100), ("b", "c", 100))
    cfg = SimConfig(best_effort_cap_under_provision=gbps(5))
    rates = compute_rates(topo, [prov("p", "ab", 7), be("x", "bc", 20), be("y", "ab", 20)], cfg)
    assert rates["x"] == 20 * G
    assert rates["y"] == 5 * G


def test_demand_cap_respected_and_overflow_without_provisions():
    topo = chain_topology(("a", "b", 10))
    rates = compute_rates(topo, [be("x", "ab", 9.2)], SimConfig(best_effort_cap_under_provision=gbps(5)))
    assert rates["x"] == pytest.approx(9.2 * G)
    # free-for-all may run past the reserved quarter when nothing is provisioned
    assert rates["x"] > 0.25 * 10 * G


def test_floor_holds_when_feasible():
    topo = chain_topology(("a", "b", 10), ("b", "c", 10))
    cfg = SimConfig(best_effort_floor=gbps(1))
    # small flow capped at its demand, floor does not push it above that
    flows = [be("tiny", "ab", 0.5), be("big", "abc"), be("other", "bc")]
    rates = compute_rates(topo, flows, cfg)
    assert rates["tiny"] == pytest.approx(0.5 * G)
    assert rates["big"] >= 1 * G


def test_infeasible_floors_scale_proportionally():
    topo = chain_topology(("a", "b", 10))
    cfg = SimConfig(best_effort_floor=gbps(1))
    flows = [prov("p", "ab", 9.5)] + [be(f"f{i}", "ab") for i in range(5)]
    rates = compute_rates(topo, flows, cfg)
    for i in range(5):
        assert rates[f"f{i}"] == pytest.approx(0.1 * G)
    assert sum(rates.values()) == pytest.approx(10 * G)


def test_infeasible_provisions():
    topo = chain_topology(("a", "b", 10))
    with pytest.raises(InfeasibleProvisions):
        compute_rates(topo, [prov("p", "ab", 7), prov("q", "ab", 4)], SimConfig())


def test_provision_limited_by_demand_and_efficiency():
    topo = chain_topology(("a", "b", 10), ("b", "c", 10))
    rates = compute_rates(
        topo,
        [prov("p", "abc", 7), prov("q", "ab", 2, demand_cap=gbps(1))],
        SimConfig(),
        efficiency={("b", "c"): 0.9},
    )
    assert rates["p"] == pytest.approx(6.3 * G)
    assert rates["q"] == 1 * G


def test_work_conserving_gives_provisions_a_share():
    topo = chain_topology(("a", "b", 10))
    flows = [prov("p", "ab", 7), be("b", "ab")]
    hard = compute_rates(topo, flows, SimConfig())
    soft = compute_rates(topo, flows, SimConfig(work_conserving=True))
    assert hard["p"] == 7 * G
    assert soft["p"] >= 7 * G
    assert soft["p"] + soft["b"] == pytest.approx(10 * G)
    flows = [prov("p", "ab", 3), be("b", "ab")]
    soft = compute_rates(topo, flows, SimConfig(work_conserving=True))
    assert soft["p"] == pytest.approx(5 * G) and soft["b"] == pytest.approx(5 * G)


def test_flow_validation():
    with pytest.raises(InvalidInput):
        Flow("x", FlowClass.PROVISIONED, Path(("a", "b")), promised_rate=1.0)
    with pytest.raises(InvalidInput):
        Flow("x", FlowClass.BEST_EFFORT, Path(("a",)))
    with pytest.raises(InvalidInput):
        SimConfig(best_effort_floor=gbps(6), best_effort_cap_under_provision=gbps(5))


def test_predict_completion():
    f = prov("p", "ab", 7, remaining=750 * GB, current_rate=gbps(7))
    assert predict_completion(f) == pytest.approx(857.142857, rel=1e-9)
    f.remaining = 0
    assert predict_completion(f) == 0
    f.remaining, f.current_rate = 10.0, 0.0
    assert predict_completion(f) == math.inf


def random_instance(rng: random.Random):
    """A line-shaped topology of up to 5 links with up to 6 flows on random sub-paths."""
    n_links = rng.randint(1, 5)
    nodes = [f"n{i}" for i in range(n_links + 1)]
    caps = [rng.randint(1, 100) for _ in range(n_links)]
    topo = chain_topology(*[(nodes[i], nodes[i + 1], caps[i]) for i in range(n_links)])
    flows = []
    budget = {i: Fraction(3 * caps[i], 4) for i in range(n_links)}
    for j in range(rng.randint(1, 6)):
        a = rng.randrange(n_links)
        b = rng.randrange(a + 1, n_links + 1)
        span = range(a, b)
        if rng.random() < 0.3:
            room = min(budget[i] for i in span)
            rate = Fraction(rng.randint(0, int(room * 10)), 10)
            if rate > 0:
                for i in span:
                    budget[i] -= rate
                flows.append(prov(f"f{j}", nodes[a : b + 1], float(rate)))
                continue
        cap = math.inf if rng.random() < 0.5 else rng.randint(1, 60)
        flows.append(be(f"f{j}", nodes[a : b + 1], cap))
    floor = rng.choice([0, 0, 0.1, 1, 5])
    cap_under = rng.choice([None, None, 5, 20])
    return topo, flows, floor, cap_under


def oracle_for(topo, flows, floor, cap_under):
    capacity = {k: Fraction(int(l.capacity)) for k, l in topo.links.items()}
    p = [(f.path.links, Fraction(f.promised_rate)) for f in flows if f.flow_class is FlowClass.PROVISIONED]
    b = [
        (f.path.links, f.demand_cap if f.demand_cap == math.inf else Fraction(f.demand_cap))
        for f in flows
        if f.flow_class is FlowClass.BEST_EFFORT
    ]
    cu = None if cap_under is None else Fraction(int(gbps(cap_under)))
    prov_rates, be_rates = reference_rates(capacity, p, b, Fraction(int(gbps(floor))), cu)
    it_p, it_b = iter(prov_rates), iter(be_rates)
    return {
        f.id: next(it_p) if f.flow_class is FlowClass.PROVISIONED else next(it_b) for f in flows
    }


def matches_oracle(seed: int) -> bool:
    topo, flows, floor, cap_under = random_instance(random.Random(seed))
    cfg = SimConfig(
        best_effort_floor=gbps(floor),
        best_effort_cap_under_provision=None if cap_under is None else gbps(cap_under),
    )
    if cap_under is not None and floor > cap_under:
        return True
    got = compute_rates(topo, flows, cfg)
    want = oracle_for(topo, flows, floor, cap_under)
    return all(math.isclose(got[k], float(v), rel_tol=1e-9, abs_tol=1e-6) for k, v in want.items())


@pytest.mark.parametrize("seed", range(50))
def test_matches_progressive_filling_oracle(seed):
    assert matches_oracle(seed)


def test_oracle_self_check():
    # the oracle reproduces the hand-worked examples too
    cap = {"ab": Fraction(10), "bc": Fraction(4)}
    assert progressive_filling(cap, [({"ab", "bc"}, 0, math.inf), ({"bc"}, 0, math.inf)]) == [2, 2]
    assert progressive_filling({"l": Fraction(10)}, [({"l"}, 0, Fraction(1)), ({"l"}, 0, math.inf)]) == [1, 9]


@st.composite
def waterfill_cases(draw):
    links = [f"l{i}" for i in range(draw(st.integers(1, 4)))]
    capacity = {k: float(draw(st.integers(1, 50))) for k in links}
    claims = []
    for _ in range(draw(st.integers(1, 6))):
        on = draw(st.sets(st.sampled_from(links), min_size=1))
        cap = draw(st.one_of(st.just(math.inf), st.integers(1, 40).map(float)))
        claims.append((tuple(sorted(on)), 0.0, cap))
    return capacity, claims


@settings(max_examples=300, deadline=None)
@given(waterfill_cases())
def test_waterfill_is_max_min_fair(case):
    capacity, claims = case
    rates = waterfill(capacity, claims)
    load = {k: 0.0 for k in capacity}
    for (links, _, _), r in zip(claims, rates):
        for k in links:
            load[k] += r
    for k, c in capacity.items():
        assert load[k] <= c * (1 + 1e-9)
    # every flow is either at its cap or crosses a saturated link where it
    # has the largest rate (the max-min bottleneck condition)
    for i, ((links, _, cap), r) in enumerate(zip(claims, rates)):
        if r >= cap * (1 - 1e-9):
            continue
        assert any(
            load[k] >= capacity[k] * (1 - 1e-9)
            and all(rates[j] <= r * (1 + 1e-9) for j, (other, _, _) in enumerate(claims) if k in other)
            for k in links
        ), (i, rates)
