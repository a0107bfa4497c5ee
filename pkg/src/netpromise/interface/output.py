"""Result files: timeline CSV plus completions / ledger / reports JSON."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable, Sequence, TextIO

from ..accounting import (
    DEFAULT_DEFICIT_THRESHOLD,
    DEFAULT_MIN_SAMPLES,
    Grouping,
    PromiseLedgerEntry,
    aggregate,
    reconcile_ledger,
)
from ..errors import MalformedDocument, SinkUnwritable
from ..flowsim import CompletionRecord, SimResult, ThroughputSample
from ..units import GB, to_gbps

FORMAT_VERSION = 1
TIMELINE_HEADER = ("time_s", "flow_id", "class", "rate_gbps")


def _num(x: float | None) -> float | None:
    # repr-exact floats; keeps output byte-stable across runs
    return None if x is None else float(x)


def emit_timeline(timeline: Iterable[ThroughputSample], sink: str | Path | TextIO | None = None) -> str:
    """Write the throughput timeline as CSV; returns the text when no sink is given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMELINE_HEADER)
    for s in sorted(timeline, key=lambda s: (s.at, s.flow_id)):
        writer.writerow((repr(float(s.at)), s.flow_id, s.flow_class.value, repr(to_gbps(s.rate))))
    text = buf.getvalue()
    if sink is None:
        return text
    _write(sink, text)
    return ""


def _write(sink: str | Path | TextIO, text: str) -> None:
    if isinstance(sink, (str, Path)):
        try:
            Path(sink).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise SinkUnwritable(f"cannot write {sink}: {exc.strerror}") from None
    else:
        try:
            sink.write(text)
        except OSError as exc:
            raise SinkUnwritable(str(exc)) from None


def _dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def completion_doc(c: CompletionRecord) -> dict[str, Any]:
    return {
        "request_id": c.request,
        "promise_id": c.promise,
        "src": c.src,
        "dst": c.dst,
        "volume_gb": c.volume / GB,
        "priority": c.priority,
        "submitted_at_s": _num(c.submitted_at),
        "granted_at_s": _num(c.granted_at),
        "started_at_s": _num(c.started_at),
        "promised_end_s": _num(c.promised_end),
        "completed_at_s": _num(c.completed_at),
        "delivered_gb": c.delivered_bits / 8 / GB,
        "deadline_s": _num(c.deadline),
        "deadline_met": c.deadline_met,
    }


def completions_json(result: SimResult) -> str:
    return _dumps(
        {
            "format_version": FORMAT_VERSION,
            "completions": [completion_doc(c) for c in result.completions],
            "unserved": list(result.unserved),
            "end_time_s": result.end_time,
        }
    )


def ledger_entry_doc(e: PromiseLedgerEntry) -> dict[str, Any]:
    return {
        "promise_id": e.promise,
        "request_id": e.request,
        "promised_gb": e.promised_bytes / GB,
        "achieved_gb": e.achieved_bytes / GB,
        "active_interval_s": [e.active_interval[0], e.active_interval[1]],
        "path": list(e.path),
        "state": e.state,
    }


def ledger_json(result: SimResult) -> str:
    return _dumps(
        {
            "format_version": FORMAT_VERSION,
            "entries": [ledger_entry_doc(e) for e in result.ledger],
            "adjustments": [
                {
                    "at_s": at,
                    "promise_id": a.promise,
                    "old_rate_gbps": to_gbps(a.old_rate),
                    "new_rate_gbps": to_gbps(a.new_rate),
                    "new_end_s": a.new_end,
                    "reason": a.reason.value,
                }
                for at, a in result.adjustments
            ],
        }
    )


def parse_ledger(doc: Any) -> list[PromiseLedgerEntry]:
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise MalformedDocument("ledger must be an object with format_version 1")
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise MalformedDocument("ledger needs an 'entries' list")
    out = []
    for i, e in enumerate(entries):
        try:
            start, end = e["active_interval_s"]
            out.append(
                PromiseLedgerEntry(
                    promise=str(e["promise_id"]),
                    request=str(e["request_id"]),
                    promised_bytes=float(e["promised_gb"]) * GB,
                    achieved_bytes=float(e["achieved_gb"]) * GB,
                    active_interval=(float(start), float(end)),
                    path=tuple(str(h) for h in e["path"]),
                    state=str(e.get("state", "completed")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"ledger entries[{i}]: {exc}") from None
        if len(out[-1].path) < 2:
            raise MalformedDocument(f"ledger entries[{i}]: path needs at least two hops")
    return out


def load_ledger(path: str | Path) -> list[PromiseLedgerEntry]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise MalformedDocument(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: {exc}") from None
    return parse_ledger(doc)


def reports_doc(
    ledger: Sequence[PromiseLedgerEntry],
    groupings: Sequence[Grouping] = tuple(Grouping),
    deficit_threshold: float = DEFAULT_DEFICIT_THRESHOLD,
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> dict[str, Any]:
    reports = reconcile_ledger(ledger, deficit_threshold)
    return {
        "format_version": FORMAT_VERSION,
        "deficit_threshold": deficit_threshold,
        "min_samples": min_samples,
        "promises": [
            {
                "promise_id": r.promise,
                "fulfilled": r.fulfilled,
                "utilization": r.utilization,
                "deficit": r.deficit,
            }
            for r in reports
        ],
        "systematic": {
            g.value: [
                {
                    "key": s.key,
                    "promise_count": s.promise_count,
                    "mean_deficit": s.mean_deficit,
                    "flagged": s.flagged,
                }
                for s in aggregate(reports, ledger, g, min_samples, deficit_threshold)
            ]
            for g in groupings
        },
    }


def reports_json(ledger: Sequence[PromiseLedgerEntry], **kwargs: Any) -> str:
    return _dumps(reports_doc(ledger, **kwargs))


def write_outputs(result: SimResult, out_dir: str | Path) -> dict[str, Path]:
    """Write the four run artefacts into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SinkUnwritable(f"cannot create {out}: {exc.strerror}") from None
    files = {
        "timeline": out / "timeline.csv",
        "completions": out / "completions.json",
        "ledger": out / "ledger.json",
        "reports": out / "reports.json",
    }
    _write(files["timeline"], emit_timeline(result.timeline))
    _write(files["completions"], completions_json(result))
    _write(files["ledger"], ledger_json(result))
    _write(files["reports"], reports_json(result.ledger))
    return files
