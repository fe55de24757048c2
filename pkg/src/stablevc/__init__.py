"""Practically-self-stabilizing bounded vector clocks with a simulation harness.

The package provides bounded epoch labels with cancellation, the per-processor
label storage, overflow-tolerant vector clock pairs, the full replication
protocol, a deterministic fault-injecting simulator, and a shadow-clock oracle
that audits counting exactness and causal precedence.
"""

from .errors import (
    ActionNotEnabled,
    AlreadyCrashed,
    BroadcastInProgress,
    DomainExhausted,
    NoBroadcast,
    NoPivot,
    NotCrashed,
    NotReady,
    PreconditionViolated,
    ScenarioError,
    StableVCError,
)
from .labeling import LabelingState, ServerMessage, SystemConfig
from .labels import Label, LabelComponent, LabelConfig
from .protocol import ClientMessage, ProcessorState
from .simnet import FaultPlan, RandomScheduler, RoundRobinScheduler, World, run
from .vcpair import VectorClockItem, VectorClockPair

__all__ = [
    "ActionNotEnabled", "AlreadyCrashed", "BroadcastInProgress",
    "ClientMessage", "DomainExhausted", "FaultPlan", "Label", "LabelComponent",
    "LabelConfig", "LabelingState", "NoBroadcast", "NoPivot", "NotCrashed",
    "NotReady", "PreconditionViolated", "ProcessorState", "RandomScheduler",
    "RoundRobinScheduler", "ScenarioError", "ServerMessage", "StableVCError",
    "SystemConfig", "VectorClockItem", "VectorClockPair", "World", "run",
]

__version__ = "0.1.0"
