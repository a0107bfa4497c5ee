"""Scenario documents: topology + sites + configuration + trace.

A scenario is a JSON object::

    {
      "format_version": 1,
      "topology": "esnet.json",            # path (relative to the scenario) or inline object
      "sites": [{"name": "ucsd", "bandwidth_limit_gbps": 10, "slot_count": 8}],
      "scheduler": {"reserved_fraction": 0.25, "minimum_grant_gbps": 1,
                    "review_interval_s": 60, "setup_delay_s": 60,
                    "teardown_delay_s": 0, "policy": "greedy_priority",
                    "link_reserved_fraction": [{"a": "x", "b": "y", "reserved_fraction": 0.5}]},
      "sim": {"measurement_interval_s": 1, "best_effort_cap_under_provision_gbps": 5,
              "best_effort_floor_gbps": 0.1, "work_conserving": false, "horizon_s": 1200},
      "trace": "trace.jsonl",              # path or inline list of records
      "degradation": [{"a": "x", "b": "y", "efficiency": 0.9}]
    }

Everything but ``topology``, ``sites`` and ``trace`` is optional.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..endpoints import DEFAULT_SLOT_COUNT, Site
from ..errors import InvalidInput, MalformedDocument, UnknownNode, UnknownSite
from ..flowsim import SimConfig
from ..scheduler import SchedulerConfig, SchedulerState, make_policy
from ..topology import SITE, LinkKey, Topology, link_key, load_topology, shortest_path
from ..units import gbps
from .trace import TraceRecord, parse_trace, parse_trace_list

_TOP_KEYS = {"format_version", "description", "topology", "sites", "scheduler", "sim", "trace", "degradation"}
_SCHED_KEYS = {
    "reserved_fraction",
    "minimum_grant_gbps",
    "review_interval_s",
    "setup_delay_s",
    "teardown_delay_s",
    "policy",
    "link_reserved_fraction",
}
_SIM_KEYS = {
    "measurement_interval_s",
    "best_effort_cap_under_provision_gbps",
    "best_effort_floor_gbps",
    "work_conserving",
    "horizon_s",
}


@dataclass(frozen=True)
class SiteSpec:
    name: str
    bandwidth_limit: float | None = None  # bits/s; None means access-link capacity
    slot_count: int = DEFAULT_SLOT_COUNT


@dataclass
class Scenario:
    topology: Topology
    sites: list[SiteSpec]
    scheduler: SchedulerConfig
    sim: SimConfig
    trace: list[TraceRecord]
    degradation: dict[LinkKey, float] = field(default_factory=dict)
    source: Path | None = None

    def build_sites(self) -> list[Site]:
        """Fresh, unattached :class:`Site` objects for one run."""
        out = []
        for spec in self.sites:
            node = self.topology.resolve(spec.name)
            limit = spec.bandwidth_limit
            if limit is None:
                limit = self.topology.access_capacity(node)
            out.append(Site(node, limit, spec.slot_count))
        return out

    def build_state(self) -> SchedulerState:
        return SchedulerState(self.topology, self.build_sites(), self.scheduler)


def _obj(value: Any, where: str, allowed: set[str]) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise MalformedDocument(f"{where} must be an object")
    extra = set(value) - allowed
    if extra:
        raise MalformedDocument(f"{where}: unexpected keys {sorted(extra)}")
    return value


def _num(doc: Mapping[str, Any], key: str, default: Any, where: str) -> Any:
    value = doc.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise MalformedDocument(f"{where}.{key} must be a finite number")
    return float(value)


def _read_json(path: Path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MalformedDocument(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: {exc}") from None


def _link(topo: Topology, entry: Mapping[str, Any], where: str) -> LinkKey:
    a, b = entry.get("a"), entry.get("b")
    if not isinstance(a, str) or not isinstance(b, str):
        raise MalformedDocument(f"{where}: a and b must be node names")
    key = link_key(topo.resolve(a), topo.resolve(b))
    if key not in topo.links:
        raise MalformedDocument(f"{where}: no link between {a!r} and {b!r}")
    return key


def parse_scenario(doc: Any, base_dir: Path | None = None) -> Scenario:
    """Structural parse of a scenario document (no cross-reference checks)."""
    base_dir = base_dir or Path(".")
    doc = _obj(doc, "scenario", _TOP_KEYS)
    if doc.get("format_version", 1) != 1:
        raise MalformedDocument(f"unsupported format_version {doc.get('format_version')!r}")
    for key in ("topology", "sites", "trace"):
        if key not in doc:
            raise MalformedDocument(f"scenario needs '{key}'")

    topo_doc = doc["topology"]
    if isinstance(topo_doc, str):
        topo_doc = _read_json(base_dir / topo_doc)
    topology = load_topology(topo_doc)

    if not isinstance(doc["sites"], list):
        raise MalformedDocument("'sites' must be a list")
    sites = []
    for i, entry in enumerate(doc["sites"]):
        entry = _obj(entry, f"sites[{i}]", {"name", "bandwidth_limit_gbps", "slot_count"})
        name = entry.get("name")
        if not isinstance(name, str) or not name:
            raise MalformedDocument(f"sites[{i}].name must be a non-empty string")
        limit = _num(entry, "bandwidth_limit_gbps", None, f"sites[{i}]")
        slots = entry.get("slot_count", DEFAULT_SLOT_COUNT)
        if not isinstance(slots, int) or isinstance(slots, bool):
            raise MalformedDocument(f"sites[{i}].slot_count must be an integer")
        sites.append(SiteSpec(name, None if limit is None else gbps(limit), slots))

    sched = _obj(doc.get("scheduler", {}), "scheduler", _SCHED_KEYS)
    overrides = {}
    for i, entry in enumerate(sched.get("link_reserved_fraction", [])):
        entry = _obj(entry, f"scheduler.link_reserved_fraction[{i}]", {"a", "b", "reserved_fraction"})
        key = _link(topology, entry, f"scheduler.link_reserved_fraction[{i}]")
        overrides[key] = _num(entry, "reserved_fraction", None, "link_reserved_fraction")
    policy = sched.get("policy", "greedy_priority")
    if not isinstance(policy, str):
        raise MalformedDocument("scheduler.policy must be a string")
    try:
        scheduler = SchedulerConfig(
            reserved_fraction=_num(sched, "reserved_fraction", 0.25, "scheduler"),
            minimum_grant=gbps(_num(sched, "minimum_grant_gbps", 1.0, "scheduler")),
            review_interval=_num(sched, "review_interval_s", 60.0, "scheduler"),
            setup_delay=_num(sched, "setup_delay_s", 60.0, "scheduler"),
            teardown_delay=_num(sched, "teardown_delay_s", 0.0, "scheduler"),
            policy=policy,
            link_reserved_fraction=overrides,
        )
    except TypeError:
        raise MalformedDocument("scheduler values must not be null") from None

    sim = _obj(doc.get("sim", {}), "sim", _SIM_KEYS)
    cap = _num(sim, "best_effort_cap_under_provision_gbps", None, "sim")
    wc = sim.get("work_conserving", False)
    if not isinstance(wc, bool):
        raise MalformedDocument("sim.work_conserving must be true or false")
    measurement = _num(sim, "measurement_interval_s", 1.0, "sim")
    simcfg = SimConfig(
        measurement_interval=measurement or None,
        best_effort_cap_under_provision=None if cap is None else gbps(cap),
        best_effort_floor=gbps(_num(sim, "best_effort_floor_gbps", 0.0, "sim") or 0.0),
        work_conserving=wc,
        horizon=_num(sim, "horizon_s", None, "sim"),
    )

    trace_doc = doc["trace"]
    if isinstance(trace_doc, str):
        path = base_dir / trace_doc
        if not path.exists():
            raise MalformedDocument(f"file not found: {path}")
        trace = parse_trace(path)
    elif isinstance(trace_doc, list):
        trace = parse_trace_list(trace_doc)
    else:
        raise MalformedDocument("'trace' must be a file name or a list of records")

    degradation = {}
    deg = doc.get("degradation", [])
    if not isinstance(deg, list):
        raise MalformedDocument("'degradation' must be a list")
    for i, entry in enumerate(deg):
        entry = _obj(entry, f"degradation[{i}]", {"a", "b", "efficiency"})
        key = _link(topology, entry, f"degradation[{i}]")
        eff = _num(entry, "efficiency", None, f"degradation[{i}]")
        if eff is None or not 0 < eff <= 1:
            raise MalformedDocument(f"degradation[{i}].efficiency must be in (0, 1]")
        degradation[key] = eff

    return Scenario(topology, sites, scheduler, simcfg, trace, degradation)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    scenario = parse_scenario(_read_json(path), path.parent)
    scenario.source = path
    return scenario


def validate_scenario(sc: Scenario) -> None:
    """Cross-reference checks: everything a run needs must resolve.

    Raises :class:`InvalidInput` (or a subclass) on the first problem.
    """
    topo = sc.topology
    declared: dict[str, SiteSpec] = {}
    for spec in sc.sites:
        if spec.name not in topo:
            raise UnknownSite(f"site {spec.name!r} is not in the topology")
        node = topo.resolve(spec.name)
        if topo.kinds[node] != SITE:
            raise UnknownSite(f"{spec.name!r} is a router, not a site")
        if node in declared:
            raise InvalidInput(f"site {spec.name!r} declared twice")
        access = topo.access_capacity(node)
        if access is None:
            raise InvalidInput(f"site {spec.name!r} has no access link")
        if spec.bandwidth_limit is not None and not 0 < spec.bandwidth_limit <= access * (1 + 1e-12):
            raise InvalidInput(
                f"site {spec.name!r}: bandwidth_limit must be in (0, access capacity {access / 1e9:g} Gb/s]"
            )
        if spec.slot_count < 2:
            raise InvalidInput(f"site {spec.name!r}: slot_count must be >= 2")
        declared[node] = spec
    make_policy(sc.scheduler.policy)

    for rec in sc.trace:
        if rec.kind not in ("request", "load_start"):
            continue
        ends = []
        for end in (rec.payload["src"], rec.payload["dst"]):
            try:
                node = topo.resolve(end)
            except UnknownNode:
                if rec.kind == "request":
                    raise UnknownSite(f"line {rec.line}: request {rec.id!r} names unknown site {end!r}") from None
                raise
            if rec.kind == "request" and node not in declared:
                raise UnknownSite(f"line {rec.line}: request {rec.id!r} names undeclared site {end!r}")
            ends.append(node)
        if ends[0] == ends[1]:
            raise InvalidInput(f"line {rec.line}: {rec.id!r} starts and ends at {ends[0]!r}")
        shortest_path(topo, ends[0], ends[1])
