from __future__ import annotations

from pathlib import Path

import pytest

from netpromise.endpoints import Site
from netpromise.scheduler import SchedulerConfig, SchedulerState
from netpromise.topology import load_topology, load_topology_file
from netpromise.units import gbps

DATA = Path(__file__).resolve().parents[1] / "src" / "netpromise" / "data"


def chain_topology(*hops: tuple[str, str, float], sites: tuple[str, ...] = ()):
    """Topology from (a, b, capacity_gbps) links; names in ``sites`` are sites."""
    names = []
    for a, b, _ in hops:
        for n in (a, b):
            if n not in names:
                names.append(n)
    return load_topology(
        {
            "nodes": [{"name": n, "kind": "site" if n in sites else "router"} for n in names],
            "links": [{"a": a, "b": b, "capacity_gbps": c} for a, b, c in hops],
        }
    )


def two_site_state(link_gbps=10.0, site_gbps=None, **cfg) -> SchedulerState:
    """ucsd -- caltech over one direct link."""
    topo = chain_topology(("ucsd", "caltech", link_gbps), sites=("ucsd", "caltech"))
    limit = gbps(site_gbps if site_gbps is not None else link_gbps)
    cfg.setdefault("setup_delay", 60.0)
    return SchedulerState(topo, [Site("ucsd", limit), Site("caltech", limit)], SchedulerConfig(**cfg))


@pytest.fixture(scope="session")
def esnet():
    return load_topology_file(DATA / "esnet.json")


@pytest.fixture
def data_dir() -> Path:
    return DATA


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
