"""Scheduler state: request queue, live promises and their VPNs."""

from __future__ import annotations

import bisect
import logging
from typing import Iterable, Mapping

from ..endpoints import Site, Vpn, VpnState, activate_vpn, attach_vpn, release_vpn
from ..errors import DuplicateRequestId, PolicyViolation, UnknownRequest, UnknownSite
from ..topology import SITE, LinkKey, Path, Topology, shortest_path
from .model import (
    EPS,
    Promise,
    PromiseAdjustment,
    PromiseState,
    SchedulerConfig,
    TransferRequest,
)
from .policy import Policy, Proposal, make_policy

log = logging.getLogger(__name__)

_REL_TOL = 1e-9


class SchedulerState:
    """Everything the network scheduler knows at one instant.

    Mutated only by the owning event loop: :meth:`submit_request`,
    :meth:`review`, :meth:`cancel_request` and the promise lifecycle calls.
    """

    def __init__(
        self,
        topology: Topology,
        sites: Mapping[str, Site] | Iterable[Site],
        config: SchedulerConfig | None = None,
        policy: Policy | None = None,
    ):
        self.topology = topology
        if isinstance(sites, Mapping):
            sites = sites.values()
        self.sites: dict[str, Site] = {}
        for site in sites:
            node = topology.resolve(site.node)
            if topology.kinds[node] != SITE:
                raise UnknownSite(f"{site.node!r} is not a site node")
            site.node = node
            self.sites[node] = site
        self.config = config or SchedulerConfig()
        self.policy = policy or make_policy(self.config.policy)
        self.requests: dict[str, TransferRequest] = {}
        self.pending: list[TransferRequest] = []
        self._pending_keys: list[tuple] = []
        self._pending_ids: set[str] = set()
        self.promises: dict[str, Promise] = {}
        self.vpns: dict[str, Vpn] = {}
        # indexes over the unreleased VPNs and live promises
        self._held: dict[str, Vpn] = {}
        self._live: dict[str, Promise] = {}
        self.history: list[tuple[float, PromiseAdjustment]] = []
        self.instant_completions: list[tuple[str, float]] = []
        self._routes: dict[tuple[str, str], Path] = {}

    # -- queries -----------------------------------------------------------

    def route(self, src: str, dst: str) -> Path:
        key = (src, dst)
        if key not in self._routes:
            self._routes[key] = shortest_path(self.topology, src, dst)
        return self._routes[key]

    def is_pending(self, request_id: str) -> bool:
        return request_id in self._pending_ids

    def live_promises(self) -> list[Promise]:
        return sorted(
            self._live.values(),
            key=lambda p: self.requests[p.request].queue_key,
        )

    def promise_for(self, request_id: str) -> Promise | None:
        return self.promises.get(f"p-{request_id}")

    def held_vpns(self) -> list[Vpn]:
        return list(self._held.values())

    def link_load(self) -> dict[LinkKey, float]:
        """Promised rate per link, counting VPNs still under construction."""
        load: dict[LinkKey, float] = {}
        for v in self.held_vpns():
            for k in v.path.links:
                load[k] = load.get(k, 0.0) + v.rate
        return load

    def site_load(self) -> dict[str, float]:
        load: dict[str, float] = {}
        for v in self.held_vpns():
            for e in v.endpoints:
                load[e.site] = load.get(e.site, 0.0) + v.rate
        return load

    # -- requests ----------------------------------------------------------

    def submit_request(self, r: TransferRequest) -> SchedulerState:
        if r.id in self.requests:
            raise DuplicateRequestId(f"request id {r.id!r} already used")
        src, dst = self._site_name(r.src), self._site_name(r.dst)
        if (src, dst) != (r.src, r.dst):
            r = TransferRequest(r.id, src, dst, r.volume, r.priority, r.requested_rate, r.deadline, r.submitted_at)
        self.route(src, dst)
        self.requests[r.id] = r
        i = bisect.bisect(self._pending_keys, r.queue_key)
        self._pending_keys.insert(i, r.queue_key)
        self.pending.insert(i, r)
        self._pending_ids.add(r.id)
        return self

    def _site_name(self, name: str) -> str:
        node = self.topology.resolve(name) if name in self.topology else name
        if node not in self.sites:
            raise UnknownSite(f"unknown site {name!r}")
        return node

    def _drop_pending(self, request_id: str) -> TransferRequest | None:
        if request_id not in self._pending_ids:
            return None
        self._pending_ids.discard(request_id)
        for i, r in enumerate(self.pending):
            if r.id == request_id:
                del self.pending[i]
                del self._pending_keys[i]
                return r
        return None

    def cancel_request(self, request_id: str, now: float = 0.0) -> TransferRequest | Promise:
        """Withdraw a queued request or cancel its live promise."""
        r = self._drop_pending(request_id)
        if r is not None:
            return r
        p = self.promise_for(request_id)
        if p is None or not p.state.live:
            raise UnknownRequest(f"no pending request or live promise for {request_id!r}")
        p.state = PromiseState.CANCELLED
        del self._live[p.id]
        self.release_promise(p.id, now)
        return p

    # -- promise lifecycle -------------------------------------------------

    def activate_promise(self, promise_id: str, now: float) -> Promise:
        p = self.promises[promise_id]
        p.state = PromiseState.ACTIVE
        activate_vpn(self.vpns[p.vpn], now)
        return p

    def complete_promise(self, promise_id: str, now: float, release: bool = True) -> Promise:
        p = self.promises[promise_id]
        p.state = PromiseState.COMPLETED
        self._live.pop(p.id, None)
        p.remaining = 0.0
        if release:
            self.release_promise(promise_id, now)
        return p

    def release_promise(self, promise_id: str, now: float) -> None:
        vpn = self.vpns[self.promises[promise_id].vpn]
        if vpn.state is not VpnState.RELEASED:
            release_vpn(vpn, now)
            del self._held[vpn.id]

    # -- review ------------------------------------------------------------

    def review(self, now: float) -> list[PromiseAdjustment]:
        """Run the policy once and apply its proposal atomically."""
        proposal = self.policy.propose(self, tuple(self.pending), tuple(self.live_promises()), now)
        self.apply(proposal, now)
        return list(proposal.adjustments)

    def apply(self, proposal: Proposal, now: float) -> None:
        self._check_proposal(proposal)
        for rid in proposal.instant:
            self._drop_pending(rid)
            self.instant_completions.append((rid, now))
        granted = {g.id: g for g in proposal.grants}
        for g in proposal.grants:
            r = self._drop_pending(g.request)
            a, b = self.sites[g.path.src], self.sites[g.path.dst]
            self.vpns[g.vpn] = attach_vpn(a, b, g.path, g.rate, now, self.config.setup_delay, g.vpn)
            self.promises[g.id] = g
            self._held[g.vpn] = self.vpns[g.vpn]
            self._live[g.id] = g
            log.debug("t=%.3f grant %s at %.4g b/s", now, g.id, g.rate)
            assert r is not None
        for adj in proposal.adjustments:
            self.history.append((now, adj))
            if adj.promise in granted and adj.is_grant:
                continue
            p = self.promises[adj.promise]
            p.rate = adj.new_rate
            p.end = adj.new_end
            self.vpns[p.vpn].rate = adj.new_rate
            deadline = self.requests[p.request].deadline
            p.deadline_at_risk = deadline is not None and p.end > deadline
        self.check_invariants()

    def _check_proposal(self, proposal: Proposal) -> None:
        rates: dict[str, tuple[Path, float]] = {v.id: (v.path, v.rate) for v in self.held_vpns()}
        granted = {g.id: g for g in proposal.grants}
        for g in proposal.grants:
            if not self.is_pending(g.request):
                raise PolicyViolation(f"grant {g.id} for request {g.request!r} that is not pending")
            rates[g.vpn] = (g.path, g.rate)
        for adj in proposal.adjustments:
            if not adj.new_rate > 0:
                raise PolicyViolation(f"adjustment drives {adj.promise} to rate {adj.new_rate}")
            if adj.promise in granted:
                # later changes to a promise granted in the same proposal
                g = granted[adj.promise]
                rates[g.vpn] = (g.path, adj.new_rate)
            elif adj.promise in self.promises:
                p = self.promises[adj.promise]
                if not p.state.live:
                    raise PolicyViolation(f"adjustment to {p.state.value} promise {p.id}")
                rates[p.vpn] = (p.path, adj.new_rate)
        self._check_loads(rates.values(), PolicyViolation)
        slots: dict[str, int] = {}
        for g in proposal.grants:
            for end in (g.path.src, g.path.dst):
                slots[end] = slots.get(end, 0) + 1
        for name, n in slots.items():
            if n > self.sites[name].free_slots:
                raise PolicyViolation(f"proposal needs {n} slots at {name!r}, {self.sites[name].free_slots} free")

    def _check_loads(self, commitments: Iterable[tuple[Path, float]], exc=AssertionError) -> None:
        links: dict[LinkKey, float] = {}
        sites: dict[str, float] = {}
        for path, rate in commitments:
            for k in path.links:
                links[k] = links.get(k, 0.0) + rate
            for end in (path.src, path.dst):
                sites[end] = sites.get(end, 0.0) + rate
        for k, load in links.items():
            limit = self.config.schedulable(self.topology, k)
            if load > limit * (1 + _REL_TOL) + EPS:
                raise exc(f"link {k[0]}-{k[1]}: promised {load:.6g} b/s > schedulable {limit:.6g} b/s")
        for name, load in sites.items():
            limit = self.sites[name].bandwidth_limit
            if load > limit * (1 + _REL_TOL) + EPS:
                raise exc(f"site {name}: promised {load:.6g} b/s > limit {limit:.6g} b/s")

    def check_invariants(self) -> None:
        """Reservation, endpoint and slot safety; raises ``AssertionError``."""
        held = self.held_vpns()
        self._check_loads(((v.path, v.rate) for v in held))
        for name, site in self.sites.items():
            in_use = sum(1 for v in held if any(e.site == name for e in v.endpoints))
            assert in_use <= site.slot_count - 1, f"site {name}: {in_use} VPNs on {site.slot_count} slots"
            assert site.slots[0] is None, f"site {name}: free-for-all slot attached"
