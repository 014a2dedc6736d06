"""Domain types: stamps, update identities, operation payloads.

An Update is the atom of replication: an immutable record of one state
mutation, identified by (replica_id, seq) and stamped with (lamport,
replica_id).  Stamps give a total order; ids give idempotent dedup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Tuple, Union

from .errors import InvalidOperation

U64_MAX = 2**64 - 1
I64_MIN = -(2**63)
I64_MAX = 2**63 - 1
MAX_REPLICA_ID_BYTES = 64


class ObjectType(IntEnum):
    # 0 is the wire marker for store-wide ops (Reset); not a user type.
    STORE = 0
    COUNTER = 1
    SET = 2
    MAP = 3


@dataclass(frozen=True)
class LamportStamp:
    """(logical time, replica id); compares lexicographically."""

    lamport: int
    replica_id: str

    def sort_key(self) -> Tuple[int, bytes]:
        # replica_id ties break bytewise, not by code point, so every
        # implementation of the wire format agrees.
        return (self.lamport, self.replica_id.encode("utf-8"))

    def __lt__(self, other: "LamportStamp") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "LamportStamp") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "LamportStamp") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "LamportStamp") -> bool:
        return self.sort_key() >= other.sort_key()


# Minimal stamp, strictly below every stamp a real update can carry.
STAMP_ZERO = LamportStamp(0, "")


@dataclass(frozen=True)
class UpdateId:
    replica_id: str
    seq: int

    def sort_key(self) -> Tuple[bytes, int]:
        return (self.replica_id.encode("utf-8"), self.seq)


Scalar = Union[int, float, bool, str, bytes]


def validate_scalar(value: Scalar) -> Scalar:
    """Reject values the canonical encoding cannot represent."""
    # bool first: it is an int subclass.
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        if not I64_MIN <= value <= I64_MAX:
            raise InvalidOperation(f"int scalar out of 64-bit range: {value}")
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvalidOperation("float scalar must be finite")
        # -0.0 == 0.0 but differs bitwise; canonical form is +0.0.
        return 0.0 if value == 0.0 else value
    if isinstance(value, str):
        value.encode("utf-8")
        return value
    if isinstance(value, bytes):
        return value
    raise InvalidOperation(f"unsupported scalar type: {type(value).__name__}")


class OpKind(IntEnum):
    COUNTER_ADD = 0x01
    SET_ADD = 0x03
    SET_REMOVE = 0x04
    MAP_PUT = 0x05
    MAP_REMOVE_KEY = 0x06
    MAP_COUNTER_ADD = 0x07
    MAP_SET_ADD = 0x08
    MAP_SET_REMOVE = 0x09
    RESET = 0x0F


@dataclass(frozen=True)
class CounterAdd:
    delta: int
    kind = OpKind.COUNTER_ADD


@dataclass(frozen=True)
class SetAdd:
    element: bytes
    kind = OpKind.SET_ADD


@dataclass(frozen=True)
class SetRemove:
    element: bytes
    observed_tags: Tuple[UpdateId, ...] = ()
    kind = OpKind.SET_REMOVE


@dataclass(frozen=True)
class MapPut:
    key: str
    value: Scalar
    kind = OpKind.MAP_PUT

    def __post_init__(self):
        object.__setattr__(self, "value", validate_scalar(self.value))


@dataclass(frozen=True)
class MapRemoveKey:
    key: str
    kind = OpKind.MAP_REMOVE_KEY


@dataclass(frozen=True)
class MapCounterAdd:
    key: str
    delta: int
    kind = OpKind.MAP_COUNTER_ADD


@dataclass(frozen=True)
class MapSetAdd:
    key: str
    element: bytes
    kind = OpKind.MAP_SET_ADD


@dataclass(frozen=True)
class MapSetRemove:
    key: str
    element: bytes
    observed_tags: Tuple[UpdateId, ...] = ()
    kind = OpKind.MAP_SET_REMOVE


@dataclass(frozen=True)
class Reset:
    new_epoch: int
    snapshot: bytes
    kind = OpKind.RESET


OpPayload = Union[
    CounterAdd,
    SetAdd,
    SetRemove,
    MapPut,
    MapRemoveKey,
    MapCounterAdd,
    MapSetAdd,
    MapSetRemove,
    Reset,
]

# Which op kinds are legal against which object type (the wire table).
# Reset is store-wide: object_type 0, empty object_id.
LEGAL_OPS = {
    ObjectType.COUNTER: {OpKind.COUNTER_ADD},
    ObjectType.SET: {OpKind.SET_ADD, OpKind.SET_REMOVE},
    ObjectType.MAP: {
        OpKind.MAP_PUT,
        OpKind.MAP_REMOVE_KEY,
        OpKind.MAP_COUNTER_ADD,
        OpKind.MAP_SET_ADD,
        OpKind.MAP_SET_REMOVE,
    },
    ObjectType.STORE: {OpKind.RESET},
}


@dataclass(frozen=True)
class Update:
    id: UpdateId
    stamp: LamportStamp
    epoch: int
    object_id: str
    object_type: ObjectType
    op: OpPayload

    def __post_init__(self):
        if self.stamp.replica_id != self.id.replica_id:
            raise InvalidOperation("stamp and id must name the same replica")
        if self.op.kind not in LEGAL_OPS[self.object_type]:
            raise InvalidOperation(
                f"op {self.op.kind.name} illegal for {self.object_type.name}"
            )
        if isinstance(self.op, Reset):
            if self.op.new_epoch <= 0:
                raise InvalidOperation("Reset.new_epoch must be > 0")
            if self.object_id != "" or self.object_type != ObjectType.STORE:
                raise InvalidOperation("Reset is store-wide")
            if self.epoch != self.op.new_epoch:
                raise InvalidOperation("a Reset carries the epoch it establishes")
        object.__setattr__(
            self, "_skey", (self.id.replica_id.encode("utf-8"), self.id.seq)
        )

    def sort_key(self):
        return self._skey

    def is_reset(self) -> bool:
        return isinstance(self.op, Reset)


def validate_replica_id(replica_id: str) -> str:
    if not replica_id:
        raise InvalidOperation("replica_id must be nonempty")
    if len(replica_id.encode("utf-8")) > MAX_REPLICA_ID_BYTES:
        raise InvalidOperation("replica_id exceeds 64 bytes")
    return replica_id


@dataclass
class ReplicaConfig:
    max_frame_len: int = 64 * 1024 * 1024
    fsync_every_record: bool = True


@dataclass(frozen=True)
class ValueView:
    """Resolved read-only view of one object, as access() returns it."""

    kind: str  # "absent" | "counter" | "set" | "map"
    value: object = None


@dataclass
class MergeReport:
    applied: int = 0
    duplicates: int = 0
    stale: int = 0
    error: Optional[str] = None

    def total(self) -> int:
        return self.applied + self.duplicates + self.stale


class VersionVector:
    """Highest contiguous per-origin seq, plus out-of-order stragglers."""

    __slots__ = ("contiguous", "pending")

    def __init__(self):
        self.contiguous: dict[str, int] = {}
        self.pending: dict[str, set] = {}

    def max_seq(self, replica_id: str) -> int:
        return self.contiguous.get(replica_id, 0)

    def contains(self, uid: UpdateId) -> bool:
        if uid.seq <= self.contiguous.get(uid.replica_id, 0):
            return True
        return uid.seq in self.pending.get(uid.replica_id, ())

    def record(self, uid: UpdateId) -> None:
        rid, seq = uid.replica_id, uid.seq
        high = self.contiguous.get(rid, 0)
        if seq <= high:
            return
        pend = self.pending.setdefault(rid, set())
        pend.add(seq)
        while high + 1 in pend:
            high += 1
            pend.discard(high)
        self.contiguous[rid] = high
        if not pend:
            self.pending.pop(rid, None)

    def rebuild(self, ids) -> None:
        self.contiguous.clear()
        self.pending.clear()
        for uid in ids:
            self.record(uid)

    def to_sorted_items(self):
        return sorted(self.contiguous.items(), key=lambda kv: kv[0].encode("utf-8"))

    def all_ids_iter(self):
        for rid, high in self.contiguous.items():
            for seq in range(1, high + 1):
                yield UpdateId(rid, seq)
        for rid, pend in self.pending.items():
            for seq in pend:
                yield UpdateId(rid, seq)
