"""Replicated Counter/Set/Map library with a canonical wire format,
deterministic simulation harness, socket plug-ins, and benchmarks."""

from .model import (
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    MergeReport,
    ObjectType,
    ReplicaConfig,
    Reset,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
    ValueView,
    VersionVector,
)
from .replica import ApplyResult, Replica
from .node import ReplicaNode

__all__ = [
    "ApplyResult",
    "CounterAdd",
    "LamportStamp",
    "MapCounterAdd",
    "MapPut",
    "MapRemoveKey",
    "MapSetAdd",
    "MapSetRemove",
    "MergeReport",
    "ObjectType",
    "Replica",
    "ReplicaConfig",
    "ReplicaNode",
    "Reset",
    "SetAdd",
    "SetRemove",
    "Update",
    "UpdateId",
    "ValueView",
    "VersionVector",
]

__version__ = "0.1.0"
