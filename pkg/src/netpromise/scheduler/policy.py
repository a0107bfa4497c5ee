"""Promise allocation policies.

A policy looks at a scheduler snapshot and proposes new grants plus rate
changes for live promises.  It must not mutate anything it is given: the
scheduler validates the whole proposal and applies it in one step, which
keeps reviews replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol, Sequence

from ..errors import InvalidInput
from .model import (
    EPS,
    CapacityView,
    Defer,
    Promise,
    PromiseAdjustment,
    PromiseState,
    Reason,
    TransferRequest,
    admission_threshold,
    compute_promise,
    constraints_of,
    plan_end,
)

if TYPE_CHECKING:
    from .state import SchedulerState


@dataclass
class Proposal:
    grants: list[Promise] = field(default_factory=list)
    adjustments: list[PromiseAdjustment] = field(default_factory=list)
    # zero-volume requests that finish without a promise
    instant: list[str] = field(default_factory=list)


class Policy(Protocol):
    name: str

    def propose(
        self,
        state: SchedulerState,
        pending: Sequence[TransferRequest],
        active: Sequence[Promise],
        now: float,
    ) -> Proposal: ...


def _replan(p: Promise, rate: float, now: float) -> float:
    start = p.start if p.state is PromiseState.PENDING else max(now, p.start)
    return plan_end(start, p.remaining, rate)


class GreedyPriorityPolicy:
    """Raise, admit, squeeze.

    1. Live promises below their requested ceiling absorb free headroom,
       highest priority first.
    2. Pending requests are admitted in queue order at whatever the path
       can still carry.
    3. A request that still does not fit may reduce strictly lower-priority
       promises on the links and sites it needs, lowest priority first,
       but never below the minimum grant.
    """

    name = "greedy_priority"

    def propose(self, state, pending, active, now):
        view = CapacityView.of(state)
        proposal = Proposal()
        requests = state.requests
        rates = {p.id: p.rate for p in active}
        work = {p.id: p for p in active}

        def adjust(p: Promise, new_rate: float, reason: Reason) -> None:
            old = rates[p.id]
            view.take(p.path, new_rate - old)
            rates[p.id] = new_rate
            proposal.adjustments.append(
                PromiseAdjustment(p.id, old, new_rate, _replan(p, new_rate, now), reason)
            )

        by_priority = sorted(active, key=lambda p: requests[p.request].queue_key)
        for p in by_priority:
            ceiling = requests[p.request].ceiling
            if rates[p.id] + EPS >= ceiling:
                continue
            headroom = view.headroom(p.path)
            new_rate = min(ceiling, rates[p.id] + headroom)
            if new_rate > rates[p.id] + EPS:
                adjust(p, new_rate, Reason.CAPACITY_FREED)

        # Availability only shrinks while admitting, so a path that could not
        # take a request cannot take a later one with the same threshold.
        blocked: set[tuple] = set()
        deferred: list[TransferRequest] = []
        for r in pending:
            if r.volume == 0:
                proposal.instant.append(r.id)
                continue
            key = (r.src, r.dst, admission_threshold(r, state.config.minimum_grant))
            if key in blocked:
                deferred.append(r)
                continue
            outcome = compute_promise(state, r, now, view)
            if isinstance(outcome, Defer):
                blocked.add(key)
                deferred.append(r)
                continue
            self._grant(outcome, view, proposal, rates, work, Reason.ADMISSION)

        # Likewise a failed squeeze stays failed for later requests of the same
        # route, priority and threshold: the queue is in priority order, so
        # they see no extra victims and no more headroom.
        failed: set[tuple] = set()
        for r in deferred:
            key = (r.src, r.dst, r.priority, admission_threshold(r, state.config.minimum_grant))
            if key in failed:
                continue
            if not self._squeeze(state, r, now, view, proposal, rates, work, adjust):
                failed.add(key)
        return proposal

    @staticmethod
    def _grant(promise, view, proposal, rates, work, reason) -> None:
        view.take(promise.path, promise.rate)
        view.take_slots(promise.path)
        rates[promise.id] = promise.rate
        work[promise.id] = promise
        proposal.grants.append(promise)
        proposal.adjustments.append(PromiseAdjustment(promise.id, 0.0, promise.rate, promise.end, reason))

    def _squeeze(self, state, r, now, view, proposal, rates, work, adjust) -> bool:
        cfg = state.config
        requests = state.requests
        path = state.route(r.src, r.dst)
        if not view.slots_available(path):
            return False
        needed = constraints_of(path)
        victims = [
            p
            for p in work.values()
            if requests[p.request].priority < r.priority and constraints_of(p.path) & needed
        ]
        if not victims:
            return False
        # lowest priority first; among equals the most recently submitted
        victims.sort(key=lambda p: (requests[p.request].priority, -requests[p.request].submitted_at, p.id))

        def reducible(p: Promise) -> float:
            return max(0.0, rates[p.id] - cfg.minimum_grant)

        trial = view.copy()
        for p in victims:
            trial.take(p.path, -reducible(p))
        target = min(r.ceiling, trial.headroom(path))
        if target + EPS < admission_threshold(r, cfg.minimum_grant) or target <= 0:
            return False

        def need(key) -> float:
            if len(key) == 1:
                return target - view.site_avail[key[0]]
            return target - view.link_avail[key]

        for p in victims:
            shared = constraints_of(p.path) & needed
            shortfall = max((need(k) for k in shared), default=0.0)
            if shortfall <= EPS:
                continue
            cut = min(reducible(p), shortfall)
            if cut <= EPS:
                continue
            adjust(p, rates[p.id] - cut, Reason.PREEMPTION_SQUEEZE)
            if all(need(k) <= EPS for k in needed):
                break

        outcome = compute_promise(state, r, now, view)
        if isinstance(outcome, Defer):
            return False
        self._grant(outcome, view, proposal, rates, work, Reason.PREEMPTION_SQUEEZE)
        return True


POLICIES: dict[str, type] = {GreedyPriorityPolicy.name: GreedyPriorityPolicy}


def make_policy(name: str) -> Policy:
    try:
        return POLICIES[name]()
    except KeyError:
        raise InvalidInput(f"unknown policy {name!r}; known: {sorted(POLICIES)}") from None


