"""Promise-granting network scheduler."""

from .model import (
    CapacityView,
    Defer,
    Promise,
    PromiseAdjustment,
    PromiseState,
    Reason,
    SchedulerConfig,
    TransferRequest,
    compute_promise,
    transfer_duration,
)
from .policy import POLICIES, GreedyPriorityPolicy, Policy, Proposal, make_policy
from .state import SchedulerState

__all__ = [
    "CapacityView",
    "Defer",
    "GreedyPriorityPolicy",
    "POLICIES",
    "Policy",
    "Promise",
    "PromiseAdjustment",
    "PromiseState",
    "Proposal",
    "Reason",
    "SchedulerConfig",
    "SchedulerState",
    "TransferRequest",
    "compute_promise",
    "make_policy",
    "transfer_duration",
]
