"""Line-delimited JSON request traces.

One record per line::

    {"at": 0, "kind": "request", "id": "r1", "src": "ucsd", "dst": "caltech",
     "volume_gb": 750, "priority": 9, "requested_rate_gbps": 7}
    {"at": 0, "kind": "load_start", "id": "bg", "src": "ucsd", "dst": "caltech",
     "demand_cap_gbps": 9.2}
    {"at": 900, "kind": "load_stop", "id": "bg"}
    {"at": 300, "kind": "cancel", "id": "r1"}

``at`` is in seconds.  Records must be sorted by ``at``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, TextIO

from ..errors import DuplicateId, MalformedRecord, UnsortedTrace
from ..flowsim import Event, EventKind, LoadSpec
from ..scheduler import TransferRequest
from ..units import UNBOUNDED, gbps, gigabytes

KINDS = ("request", "load_start", "load_stop", "cancel")

# field name -> (required, value type)
_NUMBER = "number"
_FIELDS: dict[str, dict[str, tuple[bool, str]]] = {
    "request": {
        "src": (True, "string"),
        "dst": (True, "string"),
        "volume_gb": (True, _NUMBER),
        "priority": (False, "integer"),
        "requested_rate_gbps": (False, _NUMBER),
        "deadline_s": (False, _NUMBER),
    },
    "load_start": {
        "src": (True, "string"),
        "dst": (True, "string"),
        "demand_cap_gbps": (False, _NUMBER),
    },
    "load_stop": {},
    "cancel": {},
}


@dataclass(frozen=True)
class TraceRecord:
    at: float
    kind: str
    id: str
    payload: Mapping[str, Any] = field(default_factory=dict)
    line: int | None = field(default=None, compare=False)

    def to_json(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"at": self.at, "kind": self.kind, "id": self.id}
        for name in _FIELDS[self.kind]:
            if name in self.payload:
                doc[name] = self.payload[name]
        return doc


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_value(name: str, kind: str, value: Any, line: int) -> Any:
    if value is None:
        return None
    if kind == "string":
        if not isinstance(value, str) or not value:
            raise MalformedRecord(f"{name} must be a non-empty string", line)
        return value
    if kind == "integer":
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise MalformedRecord(f"{name} must be a non-negative integer", line)
        return value
    if not _is_number(value) or value < 0:
        raise MalformedRecord(f"{name} must be a non-negative number", line)
    return float(value)


def parse_record(doc: Any, line: int) -> TraceRecord:
    if not isinstance(doc, dict):
        raise MalformedRecord("record must be a JSON object", line)
    kind = doc.get("kind")
    if kind not in KINDS:
        raise MalformedRecord(f"kind must be one of {list(KINDS)}, got {kind!r}", line)
    at = doc.get("at")
    if not _is_number(at) or at < 0:
        raise MalformedRecord("at must be a non-negative number of seconds", line)
    rid = doc.get("id")
    if not isinstance(rid, str) or not rid:
        raise MalformedRecord("id must be a non-empty string", line)
    spec = _FIELDS[kind]
    extra = set(doc) - {"at", "kind", "id"} - set(spec)
    if extra:
        raise MalformedRecord(f"unexpected fields for {kind}: {sorted(extra)}", line)
    payload = {}
    for name, (required, vtype) in spec.items():
        if name not in doc:
            if required:
                raise MalformedRecord(f"{kind} record needs {name}", line)
            continue
        value = _check_value(name, vtype, doc[name], line)
        if value is not None:
            payload[name] = value
    if kind == "request":
        if payload["src"] == payload["dst"]:
            raise MalformedRecord("src and dst must differ", line)
        if payload.get("requested_rate_gbps") == 0:
            raise MalformedRecord("requested_rate_gbps must be positive", line)
    if kind == "load_start" and payload["src"] == payload["dst"]:
        raise MalformedRecord("src and dst must differ", line)
    return TraceRecord(float(at), kind, rid, payload, line)


def check_records(records: Iterable[TraceRecord]) -> None:
    """Ordering and id rules that span records."""
    last = -math.inf
    requests: set[str] = set()
    loads: set[str] = set()
    running: set[str] = set()
    for rec in records:
        if rec.at < last:
            raise UnsortedTrace(f"line {rec.line}: t={rec.at} precedes previous record t={last}")
        last = rec.at
        if rec.kind == "request":
            if rec.id in requests:
                raise DuplicateId(f"line {rec.line}: request id {rec.id!r} repeated")
            if rec.id in loads:
                raise DuplicateId(f"line {rec.line}: id {rec.id!r} already names a load")
            requests.add(rec.id)
        elif rec.kind == "load_start":
            if rec.id in loads:
                raise DuplicateId(f"line {rec.line}: load id {rec.id!r} repeated")
            if rec.id in requests:
                raise DuplicateId(f"line {rec.line}: id {rec.id!r} already names a request")
            loads.add(rec.id)
            running.add(rec.id)
        elif rec.kind == "load_stop":
            if rec.id not in running:
                raise MalformedRecord(f"load_stop for {rec.id!r} which is not running", rec.line)
            running.discard(rec.id)
        elif rec.kind == "cancel" and rec.id not in requests:
            raise MalformedRecord(f"cancel for unknown request {rec.id!r}", rec.line)


def parse_trace_lines(lines: Iterable[str]) -> list[TraceRecord]:
    records = []
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc.msg}", lineno) from None
        records.append(parse_record(doc, lineno))
    check_records(records)
    return records


def parse_trace(file: str | Path | TextIO) -> list[TraceRecord]:
    """Parse and validate a JSONL trace file (path or open text stream)."""
    if isinstance(file, (str, Path)):
        with open(file, encoding="utf-8") as fh:
            return parse_trace_lines(fh)
    return parse_trace_lines(file)


def parse_trace_list(docs: Iterable[Any]) -> list[TraceRecord]:
    records = [parse_record(doc, i) for i, doc in enumerate(docs, start=1)]
    check_records(records)
    return records


def emit_trace(records: Iterable[TraceRecord], sink: TextIO | None = None) -> str:
    buf = sink or io.StringIO()
    for rec in records:
        buf.write(json.dumps(rec.to_json(), allow_nan=False) + "\n")
    return buf.getvalue() if sink is None else ""


def to_events(records: Iterable[TraceRecord]) -> list[Event]:
    """Translate trace records into simulator input events."""
    events = []
    for rec in records:
        p = rec.payload
        if rec.kind == "request":
            rate = p.get("requested_rate_gbps")
            req = TransferRequest(
                id=rec.id,
                src=p["src"],
                dst=p["dst"],
                volume=gigabytes(p["volume_gb"]),
                priority=p.get("priority", 0),
                requested_rate=None if rate is None else gbps(rate),
                deadline=p.get("deadline_s"),
                submitted_at=rec.at,
            )
            events.append(Event(rec.at, EventKind.REQUEST_ARRIVAL, rec.id, req))
        elif rec.kind == "cancel":
            events.append(Event(rec.at, EventKind.REQUEST_CANCEL, rec.id))
        elif rec.kind == "load_start":
            cap = p.get("demand_cap_gbps")
            spec = LoadSpec(p["src"], p["dst"], UNBOUNDED if cap is None else gbps(cap))
            events.append(Event(rec.at, EventKind.LOAD_START, rec.id, spec))
        else:
            events.append(Event(rec.at, EventKind.LOAD_STOP, rec.id))
    return events
