"""Fluid-flow discrete-event simulation."""

from .engine import (
    CompletionRecord,
    Event,
    EventKind,
    LoadSpec,
    SimResult,
    Simulation,
    ThroughputSample,
    run,
)
from .rates import Flow, FlowClass, SimConfig, compute_rates, predict_completion, waterfill

__all__ = [
    "CompletionRecord",
    "Event",
    "EventKind",
    "Flow",
    "FlowClass",
    "LoadSpec",
    "SimConfig",
    "SimResult",
    "Simulation",
    "ThroughputSample",
    "compute_rates",
    "predict_completion",
    "run",
    "waterfill",
]
