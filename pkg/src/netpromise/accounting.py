"""Reconcile achieved throughput against promises and look for patterns.

The deficit of a promise is ``max(0, 1 - achieved / promised)``.  Deficits
are averaged per route, per segment (link) or per endpoint site; a group is
flagged once it has enough promises and its mean deficit exceeds the
threshold.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import InvalidInput, UnorderedSamples, ZeroPromised
from .units import BITS_PER_BYTE

DEFAULT_DEFICIT_THRESHOLD = 0.05
DEFAULT_MIN_SAMPLES = 5


class Grouping(str, enum.Enum):
    ROUTE = "route"
    SEGMENT = "segment"
    SITE = "site"


@dataclass(frozen=True)
class PromiseLedgerEntry:
    promise: str
    request: str
    promised_bytes: float
    achieved_bytes: float
    active_interval: tuple[float, float]
    path: tuple[str, ...]
    state: str = "completed"

    def __post_init__(self) -> None:
        if self.achieved_bytes < 0 or self.promised_bytes < 0:
            raise InvalidInput(f"ledger entry {self.promise}: byte counts must be >= 0")
        start, end = self.active_interval
        if end < start:
            raise InvalidInput(f"ledger entry {self.promise}: interval ends before it starts")

    @property
    def complete(self) -> bool:
        return self.state in ("completed", "cancelled")


@dataclass(frozen=True)
class PromiseReport:
    promise: str
    fulfilled: bool
    utilization: float
    deficit: float


@dataclass(frozen=True)
class SystematicReport:
    grouping: Grouping
    key: str
    promise_count: int
    mean_deficit: float
    flagged: bool


def _point(sample) -> tuple[float, float]:
    if isinstance(sample, tuple):
        return sample
    return sample.at, sample.rate


def integrate_samples(samples: Iterable, interval: tuple[float, float]) -> float:
    """Bytes moved by a piecewise-constant rate series over ``interval``.

    Each sample's rate (bits/s) holds until the next sample; the last one
    holds to the end of the interval.  The rate before the first sample is 0.
    """
    t0, t1 = interval
    points = [_point(s) for s in samples]
    for (a, _), (b, _) in zip(points, points[1:]):
        if b < a:
            raise UnorderedSamples(f"sample at t={b} follows sample at t={a}")
    total = 0.0
    for i, (at, rate) in enumerate(points):
        nxt = points[i + 1][0] if i + 1 < len(points) else math.inf
        lo, hi = max(at, t0), min(nxt, t1)
        if hi > lo:
            total += rate * (hi - lo)
    return total / BITS_PER_BYTE


def reconcile(entry: PromiseLedgerEntry, deficit_threshold: float = DEFAULT_DEFICIT_THRESHOLD) -> PromiseReport:
    if entry.promised_bytes == 0:
        raise ZeroPromised(f"promise {entry.promise} has nothing promised")
    utilization = entry.achieved_bytes / entry.promised_bytes
    deficit = max(0.0, 1.0 - utilization)
    return PromiseReport(entry.promise, deficit <= deficit_threshold, utilization, deficit)


def group_keys(entry: PromiseLedgerEntry, grouping: Grouping | str) -> list[str]:
    grouping = Grouping(grouping)
    hops = entry.path
    if grouping is Grouping.ROUTE:
        return ["->".join(hops)]
    if grouping is Grouping.SEGMENT:
        return sorted({"--".join(sorted(pair)) for pair in zip(hops, hops[1:])})
    return sorted({hops[0], hops[-1]})


def aggregate(
    reports: Sequence[PromiseReport],
    ledger: Sequence[PromiseLedgerEntry],
    grouping: Grouping | str,
    min_samples: int = DEFAULT_MIN_SAMPLES,
    deficit_threshold: float = DEFAULT_DEFICIT_THRESHOLD,
) -> list[SystematicReport]:
    """One :class:`SystematicReport` per route, link or site, sorted by key."""
    grouping = Grouping(grouping)
    entries = {e.promise: e for e in ledger}
    deficits: dict[str, list[float]] = defaultdict(list)
    for report in reports:
        try:
            entry = entries[report.promise]
        except KeyError:
            raise InvalidInput(f"report for {report.promise} has no ledger entry") from None
        for key in group_keys(entry, grouping):
            deficits[key].append(report.deficit)
    out = []
    for key in sorted(deficits):
        values = deficits[key]
        # fsum is exactly rounded, so the mean does not depend on input order
        mean = math.fsum(values) / len(values)
        flagged = len(values) >= min_samples and mean > deficit_threshold
        out.append(SystematicReport(grouping, key, len(values), mean, flagged))
    return out


def reconcile_ledger(
    ledger: Iterable[PromiseLedgerEntry],
    deficit_threshold: float = DEFAULT_DEFICIT_THRESHOLD,
) -> list[PromiseReport]:
    """Reports for every finished entry that promised something."""
    return [
        reconcile(e, deficit_threshold)
        for e in ledger
        if e.complete and e.promised_bytes > 0
    ]
