from __future__ import annotations

import math

import pytest

from netpromise.accounting import reconcile
from netpromise.errors import MalformedTrace
from netpromise.flowsim import Event, EventKind, FlowClass, LoadSpec, SimConfig, run
from netpromise.interface import load_scenario, to_events
from netpromise.scheduler import Reason, TransferRequest
from netpromise.units import GB, gbps

from conftest import DATA, two_site_state

G = 1e9
FIG2_END = 120 + 6000 / 7


def arrival(at, rid, volume_gb=750, priority=0, rate=None):
    r = TransferRequest(rid, "ucsd", "caltech", volume_gb * GB, priority, None if rate is None else gbps(rate), None, at)
    return Event(at, EventKind.REQUEST_ARRIVAL, rid, r)


def load(at, lid, cap=None):
    return Event(at, EventKind.LOAD_START, lid, LoadSpec("ucsd", "caltech", math.inf if cap is None else gbps(cap)))


def rate_at(result, flow_id, t):
    """Rate of ``flow_id`` in force at time ``t`` according to the timeline."""
    current = 0.0
    for s in result.timeline:
        if s.flow_id == flow_id and s.at <= t:
            current = s.rate
    return current


@pytest.fixture(scope="module")
def fig2():
    sc = load_scenario(DATA / "fig2_scenario.json")
    return run(sc.build_state(), to_events(sc.trace), sc.sim, sc.degradation)


def test_fig2_completion(fig2):
    (done,) = fig2.completions
    assert done.request == "priority"
    assert done.started_at == 120
    assert done.completed_at == pytest.approx(FIG2_END, abs=1e-6)
    assert done.delivered_bits == pytest.approx(8 * 750 * GB, rel=1e-9)


def test_fig2_timeline_steps(fig2):
    for t, be in [(0, 9.2), (119.5, 9.2), (120, 5.0), (500, 5.0), (977, 5.0), (978, 9.2), (1199, 9.2)]:
        assert rate_at(fig2, "best-effort", t) == pytest.approx(be * G), t
    assert rate_at(fig2, "priority", 119) == 0
    assert {s.rate for s in fig2.timeline if s.flow_id == "priority" and s.rate > 0} == {7 * G}
    assert rate_at(fig2, "priority", 978) == 0


def test_fig2_samples_every_measurement_tick(fig2):
    ticks = {s.at for s in fig2.timeline if s.flow_id == "best-effort"}
    assert set(float(t) for t in range(0, 1201)) <= ticks
    # the rate change at completion is sampled between ticks
    assert any(abs(t - FIG2_END) < 1e-6 for t in ticks)


def test_fig2_ledger_reconciles(fig2):
    (entry,) = fig2.ledger
    assert entry.promised_bytes == pytest.approx(750 * GB, rel=1e-9)
    assert reconcile(entry).deficit <= 1e-6


def test_empty_trace():
    result = run(two_site_state(), [])
    assert result.timeline == [] and result.completions == [] and result.ledger == []


def test_sequential_grants_on_shared_segment():
    # nothing asks for a rate, so the first grant takes the whole 7.5 Gb/s
    state = two_site_state(setup_delay=0.0)
    result = run(state, [arrival(0, "a"), arrival(0, "b")])
    a, b = result.completions
    assert (a.request, b.request) == ("a", "b")
    assert a.completed_at == pytest.approx(800)
    assert b.started_at == pytest.approx(800)
    assert b.completed_at == pytest.approx(1600)


def test_free_for_all_overflow_without_provisions():
    result = run(two_site_state(), [load(0, "bg")], SimConfig(horizon=10))
    assert rate_at(result, "bg", 5) == 10 * G
    assert result.peak_link_load[("caltech", "ucsd")] > 0.25 * 10 * G


def test_conservation_and_volume():
    trace = [load(0, "bg"), arrival(0, "a", 100, rate=3), arrival(5, "b", 50, priority=3), arrival(7, "c", 20, rate=1)]
    result = run(two_site_state(setup_delay=1.0), trace, SimConfig(best_effort_floor=gbps(0.1)))
    assert len(result.completions) == 3
    for c in result.completions:
        assert c.delivered_bits == pytest.approx(8 * c.volume, rel=1e-6)
    for k, peak in result.peak_link_load.items():
        assert peak <= 10 * G * (1 + 1e-9)


def test_squeeze_lowers_running_flow():
    trace = [arrival(0, "low", 750, priority=1, rate=7), arrival(200, "high", 100, priority=9)]
    result = run(two_site_state(), trace)
    assert rate_at(result, "low", 199) == 7 * G
    assert rate_at(result, "low", 200) == pytest.approx(1 * G)
    assert rate_at(result, "high", 260) == pytest.approx(6.5 * G)
    reasons = [a.reason for _, a in result.adjustments]
    assert reasons.count(Reason.PREEMPTION_SQUEEZE) == 2
    low = next(c for c in result.completions if c.request == "low")
    assert low.delivered_bits == pytest.approx(8 * 750 * GB, rel=1e-6)


def test_cancel_running_transfer():
    trace = [arrival(0, "a", 750, rate=7), Event(100, EventKind.REQUEST_CANCEL, "a")]
    result = run(two_site_state(), trace)
    assert result.completions == []
    assert rate_at(result, "a", 100) == 0
    (entry,) = result.ledger
    assert entry.state == "cancelled"
    assert entry.active_interval == (60, 100)
    assert reconcile(entry).deficit == pytest.approx(0, abs=1e-9)


def test_cancel_before_setup_leaves_no_ledger_entry():
    trace = [arrival(0, "a", 750, rate=7), Event(30, EventKind.REQUEST_CANCEL, "a")]
    result = run(two_site_state(), trace)
    assert result.ledger == [] and result.timeline == []


def test_teardown_delay_keeps_cap_in_force():
    cfg = SimConfig(best_effort_cap_under_provision=gbps(2))
    trace = [load(0, "bg"), arrival(0, "a", 75, rate=6)]
    result = run(two_site_state(teardown_delay=30.0, setup_delay=0.0), trace, cfg)
    (done,) = result.completions
    assert done.completed_at == pytest.approx(100)
    assert rate_at(result, "bg", 110) == 2 * G
    assert rate_at(result, "bg", 131) == 10 * G


def test_zero_volume_request_completes_instantly():
    result = run(two_site_state(), [arrival(5, "empty", 0)])
    (c,) = result.completions
    assert c.promise is None and c.completed_at == 5 and c.delivered_bits == 0


def test_degradation_shows_up_in_ledger():
    result = run(two_site_state(), [arrival(0, "a", 75, rate=5)], degradation={("caltech", "ucsd"): 0.9})
    (entry,) = result.ledger
    assert rate_at(result, "a", 61) == pytest.approx(4.5 * G)
    assert reconcile(entry).deficit == pytest.approx(0.1, abs=1e-9)


def test_work_conserving_exceeds_promise():
    cfg = SimConfig(work_conserving=True)
    result = run(two_site_state(), [arrival(0, "a", 75, rate=5)], cfg)
    assert rate_at(result, "a", 61) == 10 * G
    assert reconcile(result.ledger[0]).utilization == pytest.approx(2.0)


def test_horizon_truncates_and_reports_unserved():
    trace = [arrival(0, "a", 750, rate=7), arrival(0, "b", 750)]
    result = run(two_site_state(), trace, SimConfig(horizon=300))
    assert result.end_time == 300
    assert result.completions == []
    assert result.unserved == ["b"]
    assert result.ledger[0].state == "active"


def test_unsorted_events_rejected():
    with pytest.raises(MalformedTrace):
        run(two_site_state(), [arrival(10, "a"), arrival(5, "b")])


def test_load_stop_unknown():
    with pytest.raises(MalformedTrace):
        run(two_site_state(), [Event(0, EventKind.LOAD_STOP, "nope")])


def test_identical_runs_identical_timelines():
    def once():
        trace = [load(0, "bg", 9.2), arrival(3, "a", 40, rate=4), arrival(4, "b", 30, priority=5)]
        return run(two_site_state(), trace, SimConfig(best_effort_cap_under_provision=gbps(5)))

    a, b = once(), once()
    assert a.timeline == b.timeline
    assert a.completions == b.completions
    assert a.adjustments == b.adjustments


def test_event_order_for_simultaneous_kinds():
    kinds = sorted(EventKind, key=int)
    assert kinds[0] is EventKind.FLOW_COMPLETION
    assert kinds.index(EventKind.SETUP_COMPLETE) < kinds.index(EventKind.REQUEST_ARRIVAL)
    assert kinds.index(EventKind.REQUEST_ARRIVAL) < kinds.index(EventKind.REVIEW_TICK)
    assert kinds.index(EventKind.REVIEW_TICK) < kinds.index(EventKind.LOAD_START)
    assert kinds[-1] is EventKind.MEASUREMENT_TICK
    assert FlowClass.BEST_EFFORT.value == "best_effort"
