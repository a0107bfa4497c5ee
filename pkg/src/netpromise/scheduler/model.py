"""Requests, promises, adjustments and the per-grant arithmetic."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping

from ..errors import InvalidInput, NonPositiveRate, UnknownRequest
from ..topology import LinkKey, Path, Topology
from ..units import BITS_PER_BYTE, gbps

if TYPE_CHECKING:
    from .state import SchedulerState

EPS = 1e-6  # bits/s; rate differences below this are noise


class PromiseState(str, enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    COMPLETED = "completed"
    CANCELLED = "cancelled"

    @property
    def live(self) -> bool:
        return self in (PromiseState.PENDING, PromiseState.ACTIVE)


class Reason(str, enum.Enum):
    ADMISSION = "admission"
    DEMAND_CHANGE = "demand_change"
    CAPACITY_FREED = "capacity_freed"
    PREEMPTION_SQUEEZE = "preemption_squeeze"


@dataclass(frozen=True)
class TransferRequest:
    id: str
    src: str
    dst: str
    volume: float  # bytes
    priority: int = 0
    requested_rate: float | None = None  # bits/s
    deadline: float | None = None
    submitted_at: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidInput("request id must be non-empty")
        if self.volume < 0:
            raise InvalidInput(f"request {self.id}: volume must be >= 0")
        if self.src == self.dst:
            raise InvalidInput(f"request {self.id}: src and dst are both {self.src!r}")
        if self.priority < 0:
            raise InvalidInput(f"request {self.id}: priority must be >= 0")
        if self.requested_rate is not None and not self.requested_rate > 0:
            raise InvalidInput(f"request {self.id}: requested_rate must be positive")

    @property
    def queue_key(self) -> tuple:
        return (-self.priority, self.submitted_at, self.id)

    @property
    def ceiling(self) -> float:
        return math.inf if self.requested_rate is None else self.requested_rate


@dataclass
class Promise:
    id: str
    request: str
    rate: float
    start: float
    end: float
    path: Path
    vpn: str
    state: PromiseState = PromiseState.PENDING
    remaining: float = 0.0  # bytes still to move, refreshed by the simulator
    granted_at: float = 0.0
    deadline_at_risk: bool = False


@dataclass(frozen=True)
class PromiseAdjustment:
    promise: str
    old_rate: float
    new_rate: float
    new_end: float
    reason: Reason

    @property
    def is_grant(self) -> bool:
        return self.old_rate == 0.0


@dataclass(frozen=True)
class Defer:
    request: str
    grantable: float
    reason: str = "insufficient headroom"


@dataclass
class SchedulerConfig:
    reserved_fraction: float = 0.25
    minimum_grant: float = gbps(1)
    review_interval: float = 60.0
    setup_delay: float = 60.0
    teardown_delay: float = 0.0
    policy: str = "greedy_priority"
    link_reserved_fraction: Mapping[LinkKey, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for frac in [self.reserved_fraction, *self.link_reserved_fraction.values()]:
            if not 0 <= frac < 1:
                raise InvalidInput(f"reserved_fraction must be in [0, 1), got {frac}")
        if not self.minimum_grant > 0:
            raise InvalidInput("minimum_grant must be positive")
        if not self.review_interval > 0:
            raise InvalidInput("review_interval must be positive")
        if self.setup_delay < 0 or self.teardown_delay < 0:
            raise InvalidInput("setup/teardown delays must be >= 0")

    def reserved(self, key: LinkKey) -> float:
        return self.link_reserved_fraction.get(key, self.reserved_fraction)

    def schedulable(self, topology: Topology, key: LinkKey) -> float:
        """Share of a link's capacity that promises may occupy."""
        return (1.0 - self.reserved(key)) * topology.capacity(key)


def transfer_duration(volume: float, rate: float) -> float:
    """Seconds needed to move ``volume`` bytes at ``rate`` bits/s."""
    if not rate > 0:
        raise NonPositiveRate(f"rate must be positive, got {rate}")
    return BITS_PER_BYTE * volume / rate


class CapacityView:
    """Scratch copy of uncommitted link/site bandwidth and free slots.

    Policies work against one of these so that a proposal can be computed
    without touching the live state.
    """

    def __init__(
        self,
        link_avail: dict[LinkKey, float],
        site_avail: dict[str, float],
        free_slots: dict[str, int],
    ):
        self.link_avail = link_avail
        self.site_avail = site_avail
        self.free_slots = free_slots

    @classmethod
    def of(cls, state: SchedulerState) -> CapacityView:
        load = state.link_load()
        link_avail = {
            key: state.config.schedulable(state.topology, key) - load.get(key, 0.0)
            for key in state.topology.links
        }
        reserved = state.site_load()
        site_avail = {n: s.bandwidth_limit - reserved.get(n, 0.0) for n, s in state.sites.items()}
        free = {n: s.free_slots for n, s in state.sites.items()}
        return cls(link_avail, site_avail, free)

    def copy(self) -> CapacityView:
        return CapacityView(dict(self.link_avail), dict(self.site_avail), dict(self.free_slots))

    def headroom(self, path: Path) -> float:
        values = [self.link_avail[k] for k in path.links]
        values += [self.site_avail[path.src], self.site_avail[path.dst]]
        return max(0.0, min(values))

    def take(self, path: Path, rate: float) -> None:
        for k in path.links:
            self.link_avail[k] -= rate
        self.site_avail[path.src] -= rate
        self.site_avail[path.dst] -= rate

    def slots_available(self, path: Path) -> bool:
        return self.free_slots[path.src] > 0 and self.free_slots[path.dst] > 0

    def take_slots(self, path: Path) -> None:
        self.free_slots[path.src] -= 1
        self.free_slots[path.dst] -= 1


def constraints_of(path: Path) -> set:
    """Keys of every shared resource a promise on ``path`` consumes."""
    # site keys are 1-tuples so they never collide with 2-tuple link keys
    return set(path.links) | {(path.src,), (path.dst,)}


def admission_threshold(request: TransferRequest, minimum_grant: float) -> float:
    # a request asking for less than the minimum grant is admitted at its ask
    return min(minimum_grant, request.ceiling)


def plan_end(start: float, remaining: float, rate: float) -> float:
    return start + BITS_PER_BYTE * remaining / rate


def compute_promise(
    s: SchedulerState,
    r: TransferRequest,
    now: float,
    view: CapacityView | None = None,
) -> Promise | Defer:
    """Default-policy grant for ``r`` at ``now``, or a :class:`Defer`.

    The rate is the smallest of: remaining schedulable capacity on every link
    of the shortest path, uncommitted bandwidth at both sites, and the
    requested rate.  Nothing is mutated.
    """
    if not s.is_pending(r.id):
        raise UnknownRequest(f"request {r.id!r} is not pending")
    view = view or CapacityView.of(s)
    path = s.route(r.src, r.dst)
    grantable = min(view.headroom(path), r.ceiling)
    if not view.slots_available(path):
        return Defer(r.id, grantable, "no free slot")
    if grantable + EPS < admission_threshold(r, s.config.minimum_grant) or grantable <= 0:
        return Defer(r.id, grantable)
    start = now + s.config.setup_delay
    end = plan_end(start, r.volume, grantable)
    return Promise(
        id=f"p-{r.id}",
        request=r.id,
        rate=grantable,
        start=start,
        end=end,
        path=path,
        vpn=f"vpn-{r.id}",
        remaining=r.volume,
        granted_at=now,
        deadline_at_risk=r.deadline is not None and end > r.deadline,
    )

