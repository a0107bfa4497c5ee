"""Instantaneous rate allocation for a set of fluid flows."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from ..errors import InfeasibleProvisions, InvalidInput, SimulationError
from ..topology import LinkKey, Path, Topology
from ..units import BITS_PER_BYTE, UNBOUNDED

_REL_TOL = 1e-9
_ABS_TOL = 1e-3  # bits/s


class FlowClass(str, enum.Enum):
    PROVISIONED = "provisioned"
    BEST_EFFORT = "best_effort"


@dataclass
class Flow:
    id: str
    flow_class: FlowClass
    path: Path
    remaining: float = UNBOUNDED  # bytes
    promised_rate: float = 0.0
    demand_cap: float = UNBOUNDED
    current_rate: float = 0.0
    promise: str | None = None

    def __post_init__(self) -> None:
        if len(self.path) < 2:
            raise InvalidInput(f"flow {self.id}: path must span at least one link")
        if self.flow_class is FlowClass.PROVISIONED and self.promise is None:
            raise InvalidInput(f"provisioned flow {self.id} has no promise")
        if self.flow_class is FlowClass.BEST_EFFORT and self.promise is not None:
            raise InvalidInput(f"best-effort flow {self.id} cannot hold a promise")

    @property
    def src(self) -> str:
        return self.path.src

    @property
    def dst(self) -> str:
        return self.path.dst


@dataclass
class SimConfig:
    measurement_interval: float | None = 1.0
    best_effort_cap_under_provision: float | None = None
    best_effort_floor: float = 0.0
    work_conserving: bool = False
    horizon: float | None = None

    def __post_init__(self) -> None:
        cap = self.best_effort_cap_under_provision
        if self.best_effort_floor < 0:
            raise InvalidInput("best_effort_floor must be >= 0")
        if cap is not None and cap < self.best_effort_floor:
            raise InvalidInput("best_effort_floor must not exceed best_effort_cap_under_provision")
        if self.measurement_interval is not None and self.measurement_interval < 0:
            raise InvalidInput("measurement_interval must be >= 0")
        if self.horizon is not None and self.horizon < 0:
            raise InvalidInput("horizon must be >= 0")


def predict_completion(f: Flow) -> float:
    """Seconds until ``f`` drains at its current rate."""
    if f.remaining == 0:
        return 0.0
    if f.current_rate <= 0:
        return UNBOUNDED
    return f.remaining * BITS_PER_BYTE / f.current_rate


def _saturation_level(residual: float, claims: Sequence[tuple[float, float]]) -> float:
    """Smallest water level at which the claims fill ``residual``.

    Each claim ``(base, cap)`` draws ``min(cap, max(base, level))``.
    Returns ``inf`` if the claims can never fill the link.
    """
    if sum(cap for _, cap in claims) <= residual:
        return math.inf
    fill = sum(base for base, _ in claims)
    if fill >= residual:
        return 0.0
    points = sorted({p for claim in claims for p in claim if p < math.inf})
    level = 0.0
    for nxt in points + [math.inf]:
        if nxt <= level:
            continue
        slope = sum(1 for base, cap in claims if base <= level < cap)
        if slope and level + (residual - fill) / slope <= nxt:
            return level + (residual - fill) / slope
        if nxt == math.inf:
            break
        fill += slope * (nxt - level)
        level = nxt
    return level


def waterfill(
    capacity: Mapping[LinkKey, float],
    claims: Sequence[tuple[Sequence[LinkKey], float, float]],
) -> list[float]:
    """Max-min fair rates above per-flow floors, by bottleneck elimination.

    ``claims`` holds ``(links, base, cap)`` per flow.  Every flow sits at
    ``min(cap, max(base, level))`` where its level is the water level at
    which its tightest link saturated.
    """
    n = len(claims)
    rates: list[float | None] = [None] * n
    residual = dict(capacity)
    on_link: dict[LinkKey, list[int]] = {}
    for i, (links, _, _) in enumerate(claims):
        for k in links:
            on_link.setdefault(k, []).append(i)
    unfrozen = set(range(n))
    while unfrozen:
        levels = {}
        for k, members in on_link.items():
            live = [i for i in members if i in unfrozen]
            if live:
                levels[k] = _saturation_level(residual[k], [claims[i][1:] for i in live])
        lowest = min(levels.values(), default=math.inf)
        if lowest == math.inf:
            for i in sorted(unfrozen):
                rates[i] = claims[i][2]
            break
        bottlenecks = [k for k, lvl in levels.items() if lvl <= lowest * (1 + 1e-12)]
        freeze = {i for k in bottlenecks for i in on_link[k] if i in unfrozen}
        freeze |= {i for i in unfrozen if claims[i][2] <= lowest}
        for i in sorted(freeze):
            _, base, cap = claims[i]
            rates[i] = min(cap, max(base, lowest))
            for k in claims[i][0]:
                residual[k] -= rates[i]
        unfrozen -= freeze
    return [float(r) for r in rates]  # type: ignore[arg-type]


def compute_rates(
    t: Topology,
    flows: Iterable[Flow],
    cfg: SimConfig,
    provision_links: Iterable[LinkKey] | None = None,
    efficiency: Mapping[LinkKey, float] | None = None,
) -> dict[str, float]:
    """Rate for every flow under the provision / best-effort sharing rules.

    Provisioned flows get their promised rate (scaled by the worst link
    efficiency on their path, if any).  Best-effort flows share each link's
    residual max-min fairly, capped while they overlap an active provision,
    and floored at ``cfg.best_effort_floor`` where the floor fits.
    """
    flows = sorted(flows, key=lambda f: f.id)
    efficiency = efficiency or {}
    prov = [f for f in flows if f.flow_class is FlowClass.PROVISIONED]
    be = [f for f in flows if f.flow_class is FlowClass.BEST_EFFORT]
    if provision_links is None:
        provision_links = {k for f in prov for k in f.path.links}
    provision_links = set(provision_links)

    rates: dict[str, float] = {}
    guaranteed: dict[str, float] = {}
    for f in prov:
        eff = min((efficiency.get(k, 1.0) for k in f.path.links), default=1.0)
        guaranteed[f.id] = min(f.promised_rate * eff, f.demand_cap)

    residual = {k: link.capacity for k, link in t.links.items()}
    for f in prov:
        for k in f.path.links:
            residual[k] -= guaranteed[f.id]
    for k, r in residual.items():
        if r < -(_REL_TOL * t.capacity(k) + _ABS_TOL):
            raise InfeasibleProvisions(
                f"link {k[0]}-{k[1]}: provisions exceed capacity by {-r:.6g} b/s"
            )
        residual[k] = max(r, 0.0)

    caps = {}
    bases = {}
    for f in be:
        cap = f.demand_cap
        if cfg.best_effort_cap_under_provision is not None and provision_links.intersection(f.path.links):
            cap = min(cap, cfg.best_effort_cap_under_provision)
        caps[f.id] = cap
        bases[f.id] = min(cfg.best_effort_floor, cap)
    # floors that do not fit a link are scaled down proportionally on it
    scale = {f.id: 1.0 for f in be}
    floor_load: dict[LinkKey, float] = {}
    for f in be:
        for k in f.path.links:
            floor_load[k] = floor_load.get(k, 0.0) + bases[f.id]
    for f in be:
        for k in f.path.links:
            if floor_load[k] > residual[k]:
                scale[f.id] = min(scale[f.id], residual[k] / floor_load[k])
    for f in be:
        bases[f.id] *= scale[f.id]

    if cfg.work_conserving:
        capacity = {k: link.capacity for k, link in t.links.items()}
        members = [(f, guaranteed[f.id], f.demand_cap) for f in prov]
    else:
        capacity = residual
        members = []
        rates.update(guaranteed)
    members += [(f, bases[f.id], caps[f.id]) for f in be]
    shares = waterfill(capacity, [(f.path.links, base, cap) for f, base, cap in members])
    for (f, _, _), share in zip(members, shares):
        rates[f.id] = share

    check_conservation(t, flows, rates)
    return rates


def check_conservation(t: Topology, flows: Iterable[Flow], rates: Mapping[str, float]) -> None:
    load: dict[LinkKey, float] = {}
    for f in flows:
        for k in f.path.links:
            load[k] = load.get(k, 0.0) + rates[f.id]
    for k, total in load.items():
        cap = t.capacity(k)
        if total > cap * (1 + _REL_TOL) + _ABS_TOL:
            raise SimulationError(f"link {k[0]}-{k[1]} carries {total:.9g} b/s over capacity {cap:.9g}")
