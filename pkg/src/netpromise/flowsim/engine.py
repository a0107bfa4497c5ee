"""Discrete-event fluid simulation of promises and best-effort load."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from ..accounting import PromiseLedgerEntry, integrate_samples
from ..endpoints import VpnState
from ..errors import InvalidInput, MalformedTrace, UnknownRequest
from ..scheduler import PromiseAdjustment, PromiseState, SchedulerState, TransferRequest
from ..topology import LinkKey, shortest_path
from ..units import BITS_PER_BYTE, UNBOUNDED
from .rates import Flow, FlowClass, SimConfig, compute_rates, predict_completion

log = logging.getLogger(__name__)

# remaining volumes below this many bytes count as drained
_DRAINED = 1e-6


class EventKind(enum.IntEnum):
    """Event kinds; the integer value orders simultaneous events."""

    FLOW_COMPLETION = 0
    TEARDOWN = 1
    SETUP_COMPLETE = 2
    REQUEST_ARRIVAL = 3
    REQUEST_CANCEL = 4
    REVIEW_TICK = 5
    LOAD_START = 6
    LOAD_STOP = 7
    MEASUREMENT_TICK = 8


_PERIODIC = (EventKind.REVIEW_TICK, EventKind.MEASUREMENT_TICK)


@dataclass(frozen=True, order=True)
class Event:
    at: float
    kind: EventKind
    id: str = ""
    payload: Any = field(default=None, compare=False)


@dataclass(frozen=True)
class LoadSpec:
    src: str
    dst: str
    demand_cap: float = UNBOUNDED


@dataclass(frozen=True)
class ThroughputSample:
    at: float
    flow_id: str
    flow_class: FlowClass
    rate: float


@dataclass(frozen=True)
class CompletionRecord:
    request: str
    promise: str | None
    src: str
    dst: str
    volume: float
    priority: int
    submitted_at: float
    granted_at: float | None
    started_at: float | None
    promised_end: float | None
    completed_at: float
    delivered_bits: float
    deadline: float | None = None

    @property
    def deadline_met(self) -> bool | None:
        return None if self.deadline is None else self.completed_at <= self.deadline


@dataclass
class SimResult:
    timeline: list[ThroughputSample]
    completions: list[CompletionRecord]
    ledger: list[PromiseLedgerEntry]
    adjustments: list[tuple[float, PromiseAdjustment]]
    unserved: list[str]
    end_time: float
    peak_link_load: dict[LinkKey, float]


class Simulation:
    """Single-threaded event loop over one scheduler state.

    Between events every rate is constant; the earliest drain among finite
    flows is predicted after each recomputation and competes with the event
    queue for the next step.
    """

    def __init__(
        self,
        state: SchedulerState,
        trace: Iterable[Event],
        cfg: SimConfig | None = None,
        degradation: Mapping[LinkKey, float] | None = None,
    ):
        self.state = state
        self.cfg = cfg or SimConfig()
        self.degradation = dict(degradation or {})
        for k, eff in self.degradation.items():
            if k not in state.topology.links:
                raise InvalidInput(f"degradation on unknown link {k}")
            if not 0 < eff <= 1:
                raise InvalidInput(f"efficiency for {k} must be in (0, 1], got {eff}")
        self.now = 0.0
        self.flows: dict[str, Flow] = {}
        self.queue: list[tuple[Event, int]] = []
        self._seq = itertools.count()
        self.samples: list[ThroughputSample] = []
        self._emitted: dict[str, float] = {}
        self._ended: list[Flow] = []
        self._measure = False
        self._delivered: dict[str, float] = {}
        self._promised_history: dict[str, list[tuple[float, float]]] = {}
        self._started: dict[str, float] = {}
        self._closed: dict[str, float] = {}
        self.completions: list[CompletionRecord] = []
        self.adjustments: list[tuple[float, PromiseAdjustment]] = []
        self.peak: dict[LinkKey, float] = {}

        last = -math.inf
        for ev in trace:
            if ev.at < last:
                raise MalformedTrace(f"trace not sorted by time at event {ev.id!r} (t={ev.at})")
            if ev.at < 0 or not math.isfinite(ev.at):
                raise MalformedTrace(f"event {ev.id!r} has invalid time {ev.at}")
            last = ev.at
            self._push(ev)
        self._push(Event(state.config.review_interval, EventKind.REVIEW_TICK, "review"))
        if self.cfg.measurement_interval:
            self._push(Event(0.0, EventKind.MEASUREMENT_TICK, "measure"))

    # -- queue -------------------------------------------------------------

    def _push(self, ev: Event) -> None:
        heapq.heappush(self.queue, (ev, next(self._seq)))

    def _has_work(self) -> bool:
        if any(ev.kind not in _PERIODIC for ev, _ in self.queue):
            return True
        if any(math.isfinite(f.remaining) for f in self.flows.values()):
            return True
        return any(p.state.live for p in self.state.promises.values())

    def _reschedule(self, kind: EventKind, interval: float, name: str) -> None:
        at = self.now + interval
        horizon = self.cfg.horizon
        if horizon is not None:
            if at <= horizon:
                self._push(Event(at, kind, name))
        elif self._has_work():
            self._push(Event(at, kind, name))

    def _next_completion(self) -> tuple[float, list[Flow]]:
        best = math.inf
        due: list[Flow] = []
        for f in self.flows.values():
            if not math.isfinite(f.remaining):
                continue
            eta = self.now + predict_completion(f)
            if eta < best - 1e-9:
                best, due = eta, [f]
            elif abs(eta - best) <= 1e-9:
                due.append(f)
        return best, due

    # -- main loop ---------------------------------------------------------

    def run(self) -> SimResult:
        dirty = False
        horizon = self.cfg.horizon if self.cfg.horizon is not None else math.inf
        while True:
            t_done, due = self._next_completion()
            t_event = self.queue[0][0].at if self.queue else math.inf
            t = min(t_done, t_event)
            if dirty and t > self.now:
                self._flush()
                dirty = False
            if t == math.inf or t > horizon:
                break
            self._advance(t)
            if t_done <= t_event:
                self._complete(due)
            else:
                ev, _ = heapq.heappop(self.queue)
                self._handle(ev)
            self._recompute()
            dirty = True
        if dirty:
            self._flush()
        if math.isfinite(horizon) and horizon > self.now:
            self._advance(horizon)
        return self._result()

    def _advance(self, t: float) -> None:
        dt = t - self.now
        if dt > 0:
            for f in self.flows.values():
                moved = f.current_rate * dt
                self._delivered[f.id] = self._delivered.get(f.id, 0.0) + moved
                if math.isfinite(f.remaining):
                    f.remaining = max(0.0, f.remaining - moved / BITS_PER_BYTE)
        self.now = t

    def _recompute(self) -> None:
        active_links = {
            k for v in self.state.held_vpns() if v.state is VpnState.ACTIVE for k in v.path.links
        }
        rates = compute_rates(
            self.state.topology, self.flows.values(), self.cfg, active_links, self.degradation
        )
        load: dict[LinkKey, float] = {}
        for f in self.flows.values():
            f.current_rate = rates[f.id]
            for k in f.path.links:
                load[k] = load.get(k, 0.0) + f.current_rate
        for k, v in load.items():
            if v > self.peak.get(k, 0.0):
                self.peak[k] = v

    def _flush(self) -> None:
        for f in sorted(self._ended, key=lambda f: f.id):
            self.samples.append(ThroughputSample(self.now, f.id, f.flow_class, 0.0))
            self._emitted.pop(f.id, None)
        self._ended.clear()
        for fid in sorted(self.flows):
            f = self.flows[fid]
            if self._measure or self._emitted.get(fid) != f.current_rate:
                self.samples.append(ThroughputSample(self.now, fid, f.flow_class, f.current_rate))
                self._emitted[fid] = f.current_rate
        self._measure = False

    # -- handlers ----------------------------------------------------------

    def _handle(self, ev: Event) -> None:
        kind = ev.kind
        if kind is EventKind.REQUEST_ARRIVAL:
            req: TransferRequest = ev.payload
            self.state.submit_request(req)
            self._review()
        elif kind is EventKind.REQUEST_CANCEL:
            self._cancel(ev.id)
        elif kind is EventKind.SETUP_COMPLETE:
            self._setup_complete(ev.id)
        elif kind is EventKind.TEARDOWN:
            self.state.release_promise(ev.id, self.now)
            self._review()
        elif kind is EventKind.REVIEW_TICK:
            self._review()
            self._reschedule(kind, self.state.config.review_interval, ev.id)
        elif kind is EventKind.LOAD_START:
            self._load_start(ev.id, ev.payload)
        elif kind is EventKind.LOAD_STOP:
            if ev.id not in self.flows or self.flows[ev.id].flow_class is not FlowClass.BEST_EFFORT:
                raise MalformedTrace(f"load_stop for load {ev.id!r} that is not running")
            self._ended.append(self.flows.pop(ev.id))
        elif kind is EventKind.MEASUREMENT_TICK:
            self._measure = True
            assert self.cfg.measurement_interval
            self._reschedule(kind, self.cfg.measurement_interval, ev.id)

    def _load_start(self, load_id: str, spec: LoadSpec) -> None:
        if load_id in self.flows:
            raise MalformedTrace(f"flow id {load_id!r} already running")
        path = shortest_path(self.state.topology, spec.src, spec.dst)
        self.flows[load_id] = Flow(load_id, FlowClass.BEST_EFFORT, path, demand_cap=spec.demand_cap)

    def _setup_complete(self, promise_id: str) -> None:
        p = self.state.promises[promise_id]
        if p.state is not PromiseState.PENDING:
            return  # cancelled while the path was being built
        self.state.activate_promise(promise_id, self.now)
        req = self.state.requests[p.request]
        if req.id in self.flows:
            raise MalformedTrace(f"flow id {req.id!r} already running")
        self.flows[req.id] = Flow(
            req.id,
            FlowClass.PROVISIONED,
            p.path,
            remaining=p.remaining,
            promised_rate=p.rate,
            promise=p.id,
        )
        self._started[p.id] = self.now
        self._promised_history[p.id] = [(self.now, p.rate)]

    def _close_promise(self, promise_id: str) -> None:
        if promise_id in self._started:
            self._promised_history[promise_id].append((self.now, 0.0))
            self._closed[promise_id] = self.now

    def _complete(self, due: list[Flow]) -> None:
        teardown = self.state.config.teardown_delay
        for f in sorted(due, key=lambda f: f.id):
            f.remaining = 0.0
            del self.flows[f.id]
            self._ended.append(f)
            p = self.state.promises[f.promise]  # type: ignore[index]
            self.state.complete_promise(p.id, self.now, release=teardown == 0)
            if teardown > 0:
                self._push(Event(self.now + teardown, EventKind.TEARDOWN, p.id))
            self._close_promise(p.id)
            req = self.state.requests[p.request]
            self.completions.append(
                CompletionRecord(
                    request=req.id,
                    promise=p.id,
                    src=req.src,
                    dst=req.dst,
                    volume=req.volume,
                    priority=req.priority,
                    submitted_at=req.submitted_at,
                    granted_at=p.granted_at,
                    started_at=self._started[p.id],
                    promised_end=p.end,
                    completed_at=self.now,
                    delivered_bits=self._delivered.get(f.id, 0.0),
                    deadline=req.deadline,
                )
            )
        self._review()

    def _cancel(self, request_id: str) -> None:
        if request_id not in self.state.requests:
            raise MalformedTrace(f"cancel for request {request_id!r} that was never submitted")
        try:
            outcome = self.state.cancel_request(request_id, self.now)
        except UnknownRequest:
            log.info("t=%.3f cancel of finished request %s ignored", self.now, request_id)
            return
        flow = self.flows.pop(request_id, None)
        if flow is not None:
            self._ended.append(flow)
        if getattr(outcome, "state", None) is PromiseState.CANCELLED:
            self._close_promise(outcome.id)
        self._review()

    def _review(self) -> None:
        for f in self.flows.values():
            if f.promise is not None:
                self.state.promises[f.promise].remaining = f.remaining
        adjustments = self.state.review(self.now)
        for adj in adjustments:
            self.adjustments.append((self.now, adj))
            p = self.state.promises[adj.promise]
            if adj.is_grant:
                self._push(Event(p.start, EventKind.SETUP_COMPLETE, p.id))
                continue
            flow = self.flows.get(p.request)
            if flow is not None:
                flow.promised_rate = p.rate
                self._promised_history[p.id].append((self.now, p.rate))
        for rid, at in self.state.instant_completions:
            req = self.state.requests[rid]
            self.completions.append(
                CompletionRecord(rid, None, req.src, req.dst, 0.0, req.priority, req.submitted_at,
                                 None, None, None, at, 0.0, req.deadline)
            )
        self.state.instant_completions.clear()

    # -- results -----------------------------------------------------------

    def _result(self) -> SimResult:
        by_flow: dict[str, list[tuple[float, float]]] = {}
        for s in self.samples:
            by_flow.setdefault(s.flow_id, []).append((s.at, s.rate))
        ledger = []
        for pid in sorted(self._started):
            p = self.state.promises[pid]
            start = self._started[pid]
            end = self._closed.get(pid, self.now)
            ledger.append(
                PromiseLedgerEntry(
                    promise=pid,
                    request=p.request,
                    promised_bytes=integrate_samples(self._promised_history[pid], (start, end)),
                    achieved_bytes=integrate_samples(by_flow.get(p.request, []), (start, end)),
                    active_interval=(start, end),
                    path=p.path.hops,
                    state=p.state.value,
                )
            )
        return SimResult(
            timeline=sorted(self.samples, key=lambda s: (s.at, s.flow_id)),
            completions=sorted(self.completions, key=lambda c: (c.completed_at, c.request)),
            ledger=ledger,
            adjustments=self.adjustments,
            unserved=[r.id for r in self.state.pending],
            end_time=self.now,
            peak_link_load=dict(sorted(self.peak.items())),
        )


def run(
    state: SchedulerState,
    trace: Iterable[Event],
    cfg: SimConfig | None = None,
    degradation: Mapping[LinkKey, float] | None = None,
) -> SimResult:
    return Simulation(state, trace, cfg, degradation).run()
