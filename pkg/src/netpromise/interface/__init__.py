"""File formats and the command-line surface."""

from .output import emit_timeline, load_ledger, parse_ledger, reports_doc, write_outputs
from .scenario import Scenario, SiteSpec, load_scenario, parse_scenario, validate_scenario
from .trace import TraceRecord, emit_trace, parse_trace, parse_trace_lines, parse_trace_list, to_events

__all__ = [
    "Scenario",
    "SiteSpec",
    "TraceRecord",
    "emit_timeline",
    "emit_trace",
    "load_ledger",
    "load_scenario",
    "parse_ledger",
    "parse_scenario",
    "parse_trace",
    "parse_trace_lines",
    "parse_trace_list",
    "reports_doc",
    "to_events",
    "validate_scenario",
    "write_outputs",
]
