"""Site endpoints: schedulable slots and the VPNs that attach slot pairs.

Slot 0 at every site carries free-for-all traffic and is never handed out.
Slots are admission tokens only; no addressing is modelled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .errors import AlreadyReleased, InvalidInput, NoFreeSlot, PathMismatch, RateExceedsLimit
from .topology import Path, Topology, path_bottleneck

DEFAULT_SLOT_COUNT = 8
FREE_FOR_ALL_SLOT = 0
RATE_TOLERANCE = 1e-6  # bits/s


class VpnState(str, enum.Enum):
    CONSTRUCTING = "constructing"
    ACTIVE = "active"
    RELEASED = "released"


@dataclass
class Site:
    node: str
    bandwidth_limit: float  # bits/s
    slot_count: int = DEFAULT_SLOT_COUNT
    slots: list[str | None] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.slot_count < 2:
            raise InvalidInput(f"site {self.node!r}: slot_count must be >= 2, got {self.slot_count}")
        if not self.bandwidth_limit > 0:
            raise InvalidInput(f"site {self.node!r}: bandwidth_limit must be positive")
        if not self.slots:
            self.slots = [None] * self.slot_count
        # slot 0 is pinned to free-for-all
        self.slots[FREE_FOR_ALL_SLOT] = None

    @property
    def free_slots(self) -> int:
        return sum(1 for s in self.slots[1:] if s is None)

    def in_use(self, index: int) -> bool:
        return self.slots[index] is not None


@dataclass(frozen=True)
class SlotAssignment:
    site: str
    slot_index: int


@dataclass
class Vpn:
    id: str
    endpoints: tuple[SlotAssignment, SlotAssignment]
    path: Path
    rate: float
    state: VpnState
    setup_complete_at: float
    released_at: float | None = None
    sites: tuple[Site, Site] = field(default=None, repr=False, compare=False)  # type: ignore[assignment]


def allocate_slot(site: Site, owner: str = "") -> int:
    """Claim the lowest free schedulable slot (index >= 1)."""
    for index in range(1, site.slot_count):
        if site.slots[index] is None:
            site.slots[index] = owner or f"slot-{index}"
            return index
    raise NoFreeSlot(f"site {site.node!r} has no free schedulable slot")


def release_slot(site: Site, index: int) -> None:
    if index == FREE_FOR_ALL_SLOT:
        raise InvalidInput("slot 0 is reserved for free-for-all")
    site.slots[index] = None


def attach_vpn(
    a: Site,
    b: Site,
    path: Path,
    rate: float,
    now: float,
    setup_delay: float,
    vpn_id: str = "",
    topology: Topology | None = None,
) -> Vpn:
    """Start constructing a VPN between a free slot at ``a`` and one at ``b``.

    The VPN becomes usable at ``now + setup_delay``.  When ``topology`` is
    given the rate is also checked against the path bottleneck.
    """
    if a.node == b.node:
        raise PathMismatch("a VPN needs two distinct sites")
    if {path.src, path.dst} != {a.node, b.node} or len(path) < 2:
        raise PathMismatch(f"path {path} does not join {a.node!r} and {b.node!r}")
    if not rate > 0:
        raise RateExceedsLimit(f"VPN rate must be positive, got {rate}")
    limit = min(a.bandwidth_limit, b.bandwidth_limit)
    if topology is not None:
        limit = min(limit, path_bottleneck(topology, path))
    if rate > limit + RATE_TOLERANCE:
        raise RateExceedsLimit(f"rate {rate:g} b/s exceeds limit {limit:g} b/s on {path}")
    if a.free_slots == 0:
        raise NoFreeSlot(f"site {a.node!r} has no free schedulable slot")
    if b.free_slots == 0:
        raise NoFreeSlot(f"site {b.node!r} has no free schedulable slot")
    vpn_id = vpn_id or f"vpn-{a.node}-{b.node}-{now:g}"
    slot_a = allocate_slot(a, vpn_id)
    slot_b = allocate_slot(b, vpn_id)
    return Vpn(
        id=vpn_id,
        endpoints=(SlotAssignment(a.node, slot_a), SlotAssignment(b.node, slot_b)),
        path=path,
        rate=rate,
        state=VpnState.CONSTRUCTING,
        setup_complete_at=now + setup_delay,
        sites=(a, b),
    )


def activate_vpn(v: Vpn, now: float) -> Vpn:
    if v.state is not VpnState.CONSTRUCTING:
        raise AlreadyReleased(f"VPN {v.id} is {v.state.value}, cannot activate")
    v.state = VpnState.ACTIVE
    v.setup_complete_at = now
    return v


def release_vpn(v: Vpn, now: float) -> Vpn:
    """Tear down ``v`` and hand both slots back to their sites."""
    if v.state is VpnState.RELEASED:
        raise AlreadyReleased(f"VPN {v.id} already released")
    for site, slot in zip(v.sites, v.endpoints):
        release_slot(site, slot.slot_index)
    v.state = VpnState.RELEASED
    v.released_at = now
    return v


def _touches(v: Vpn, site: Site) -> bool:
    return any(e.site == site.node for e in v.endpoints)


def site_committed(site: Site, vpns: Iterable[Vpn]) -> float:
    """Sum of rates of *active* VPNs ending at ``site``."""
    return sum(v.rate for v in vpns if v.state is VpnState.ACTIVE and _touches(v, site))


def site_reserved(site: Site, vpns: Iterable[Vpn]) -> float:
    """Like :func:`site_committed` but also counting VPNs still being built."""
    return sum(v.rate for v in vpns if v.state is not VpnState.RELEASED and _touches(v, site))
