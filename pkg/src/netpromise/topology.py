"""Capacity-annotated network graph and deterministic hop-count routing."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path as FsPath
from typing import Any, Iterable, Mapping

from .errors import (
    DanglingEndpoint,
    DuplicateLink,
    InvalidPath,
    MalformedDocument,
    NoRoute,
    NonPositiveCapacity,
    UnknownNode,
)
from .units import UNBOUNDED, gbps

SITE = "site"
ROUTER = "router"
NODE_KINDS = (SITE, ROUTER)

LinkKey = tuple[str, str]


def link_key(a: str, b: str) -> LinkKey:
    """Canonical (sorted) key for the undirected link between ``a`` and ``b``."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    capacity: float  # bits/s

    @property
    def key(self) -> LinkKey:
        return link_key(self.a, self.b)

    def other(self, node: str) -> str:
        return self.b if node == self.a else self.a


@dataclass(frozen=True)
class Path:
    hops: tuple[str, ...]

    @cached_property
    def links(self) -> tuple[LinkKey, ...]:
        return tuple(link_key(u, v) for u, v in zip(self.hops, self.hops[1:]))

    @property
    def src(self) -> str:
        return self.hops[0]

    @property
    def dst(self) -> str:
        return self.hops[-1]

    def __len__(self) -> int:
        return len(self.hops)

    def __str__(self) -> str:
        return " ".join(self.hops)


@dataclass(frozen=True)
class Topology:
    """Immutable undirected graph of sites and routers.

    ``aliases`` maps alternative names (e.g. an institution short name) onto
    node names; every lookup goes through :meth:`resolve`.
    """

    kinds: Mapping[str, str]
    links: Mapping[LinkKey, Link]
    aliases: Mapping[str, str] = field(default_factory=dict)
    adjacency: Mapping[str, tuple[str, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        adj: dict[str, list[str]] = {n: [] for n in self.kinds}
        for link in self.links.values():
            adj[link.a].append(link.b)
            adj[link.b].append(link.a)
        object.__setattr__(self, "adjacency", {n: tuple(sorted(v)) for n, v in adj.items()})

    @property
    def nodes(self) -> list[str]:
        return sorted(self.kinds)

    @property
    def sites(self) -> list[str]:
        return sorted(n for n, k in self.kinds.items() if k == SITE)

    def __contains__(self, name: str) -> bool:
        return name in self.kinds or name in self.aliases

    def resolve(self, name: str) -> str:
        if name in self.kinds:
            return name
        try:
            return self.aliases[name]
        except KeyError:
            raise UnknownNode(f"unknown node {name!r}") from None

    def kind(self, name: str) -> str:
        return self.kinds[self.resolve(name)]

    def link(self, a: str, b: str) -> Link:
        try:
            return self.links[link_key(self.resolve(a), self.resolve(b))]
        except KeyError:
            raise InvalidPath(f"no link between {a!r} and {b!r}") from None

    def capacity(self, key: LinkKey) -> float:
        return self.links[key].capacity

    def access_capacity(self, site: str) -> float | None:
        """Capacity of a site's single access link, or None if it has none."""
        node = self.resolve(site)
        neighbours = self.adjacency[node]
        if not neighbours:
            return None
        return self.links[link_key(node, neighbours[0])].capacity


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise MalformedDocument(message)


def load_topology(document: Mapping[str, Any]) -> Topology:
    """Build a validated :class:`Topology` from a parsed topology document.

    The document holds ``nodes: [{name, kind, aliases?}]`` and
    ``links: [{a, b, capacity_gbps}]``.  Site nodes attach to the network via
    at most one access link.
    """
    _require(isinstance(document, Mapping), "topology document must be an object")
    version = document.get("format_version", 1)
    _require(version == 1, f"unsupported format_version {version!r}")
    unknown = set(document) - {"format_version", "nodes", "links", "description", "note"}
    _require(not unknown, f"unexpected keys {sorted(unknown)}")
    nodes = document.get("nodes")
    links = document.get("links", [])
    _require(isinstance(nodes, list), "'nodes' must be a list")
    _require(isinstance(links, list), "'links' must be a list")

    kinds: dict[str, str] = {}
    aliases: dict[str, str] = {}
    for i, entry in enumerate(nodes):
        _require(isinstance(entry, Mapping), f"nodes[{i}] must be an object")
        extra = set(entry) - {"name", "kind", "aliases"}
        _require(not extra, f"nodes[{i}]: unexpected keys {sorted(extra)}")
        name = entry.get("name")
        kind = entry.get("kind")
        _require(isinstance(name, str) and name != "", f"nodes[{i}]: name must be a non-empty string")
        _require(kind in NODE_KINDS, f"node {name!r}: kind must be 'site' or 'router'")
        _require(name not in kinds and name not in aliases, f"duplicate node name {name!r}")
        kinds[name] = kind
        for alias in entry.get("aliases", []):
            _require(isinstance(alias, str) and alias != "", f"node {name!r}: bad alias {alias!r}")
            _require(alias not in kinds and alias not in aliases, f"duplicate node name {alias!r}")
            aliases[alias] = name
    clash = set(kinds) & set(aliases)
    _require(not clash, f"alias shadows node name: {sorted(clash)}")

    table: dict[LinkKey, Link] = {}
    for i, entry in enumerate(links):
        _require(isinstance(entry, Mapping), f"links[{i}] must be an object")
        extra = set(entry) - {"a", "b", "capacity_gbps"}
        _require(not extra, f"links[{i}]: unexpected keys {sorted(extra)}")
        a, b, cap = entry.get("a"), entry.get("b"), entry.get("capacity_gbps")
        _require(isinstance(a, str) and isinstance(b, str), f"links[{i}]: endpoints must be strings")
        _require(
            isinstance(cap, (int, float)) and not isinstance(cap, bool) and math.isfinite(cap),
            f"links[{i}]: capacity_gbps must be a finite number",
        )
        for end in (a, b):
            if end not in kinds:
                raise DanglingEndpoint(f"link {a}-{b} references unknown node {end!r}")
        _require(a != b, f"links[{i}]: self-loop on {a!r}")
        if cap <= 0:
            raise NonPositiveCapacity(f"link {a}-{b} has capacity {cap} Gb/s")
        key = link_key(a, b)
        if key in table:
            raise DuplicateLink(f"more than one link between {key[0]!r} and {key[1]!r}")
        table[key] = Link(a, b, gbps(cap))

    topo = Topology(kinds, table, aliases)
    for name, kind in kinds.items():
        if kind == SITE and len(topo.adjacency[name]) > 1:
            raise MalformedDocument(f"site {name!r} has {len(topo.adjacency[name])} links; sites attach via one access link")
    return topo


def load_topology_file(path: str | FsPath) -> Topology:
    try:
        with open(path, encoding="utf-8") as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: {exc}") from None
    return load_topology(document)


def topology_document(topo: Topology) -> dict[str, Any]:
    """Inverse of :func:`load_topology`."""
    by_node: dict[str, list[str]] = {}
    for alias, name in topo.aliases.items():
        by_node.setdefault(name, []).append(alias)
    nodes = []
    for name in topo.nodes:
        entry: dict[str, Any] = {"name": name, "kind": topo.kinds[name]}
        if name in by_node:
            entry["aliases"] = sorted(by_node[name])
        nodes.append(entry)
    links = [
        {"a": link.a, "b": link.b, "capacity_gbps": link.capacity / 1e9}
        for _, link in sorted(topo.links.items())
    ]
    return {"format_version": 1, "nodes": nodes, "links": links}


def shortest_path(t: Topology, src: str, dst: str) -> Path:
    """Minimum-hop path from ``src`` to ``dst``.

    Dijkstra over unit weights.  Among equal-length routes each node keeps the
    lexicographically smallest predecessor, so the result is a pure function
    of the graph.
    """
    src, dst = t.resolve(src), t.resolve(dst)
    if src == dst:
        return Path((src,))
    dist = {src: 0}
    pred: dict[str, str] = {}
    settled: set[str] = set()
    heap = [(0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == dst:
            break
        for v in t.adjacency[u]:
            if v in settled:
                continue
            nd = d + 1
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
            elif nd == dist[v] and u < pred[v]:
                pred[v] = u
    if dst not in settled:
        raise NoRoute(f"no route from {src!r} to {dst!r}")
    hops = [dst]
    while hops[-1] != src:
        hops.append(pred[hops[-1]])
    return Path(tuple(reversed(hops)))


def validate_path(t: Topology, p: Path) -> None:
    if not p.hops:
        raise InvalidPath("empty path")
    for hop in p.hops:
        if hop not in t.kinds:
            raise InvalidPath(f"path visits unknown node {hop!r}")
    if len(set(p.hops)) != len(p.hops):
        raise InvalidPath(f"path repeats a node: {p}")
    for key in p.links:
        if key not in t.links:
            raise InvalidPath(f"path uses missing link {key[0]}-{key[1]}")


def path_bottleneck(t: Topology, p: Path) -> float:
    """Smallest link capacity on ``p``; ``UNBOUNDED`` for a single-node path."""
    validate_path(t, p)
    return min((t.capacity(k) for k in p.links), default=UNBOUNDED)


def links_of(paths: Iterable[Path]) -> set[LinkKey]:
    out: set[LinkKey] = set()
    for p in paths:
        out.update(p.links)
    return out
