"""Replica state machine: clocks, the update log, and apply semantics.

A replica's state is, definitionally, its set of applied updates; the
object store is a fold of that set.  apply_update is idempotent (dedup
by UpdateId), commutative (see state.py), and epoch-gated (updates from
before the newest Reset are stale and never touch state).
"""

from __future__ import annotations

from enum import IntEnum
from typing import List, Optional

from .errors import DecodeError, InvalidOperation, MalformedUpdate
from .model import (
    LEGAL_OPS,
    LamportStamp,
    ObjectType,
    OpPayload,
    Reset,
    ReplicaConfig,
    Update,
    UpdateId,
    ValueView,
    VersionVector,
    CounterAdd,
    MapCounterAdd,
    MapPut,
    SetAdd,
    SetRemove,
    MapSetAdd,
    MapSetRemove,
    validate_replica_id,
    validate_scalar,
    I64_MAX,
    I64_MIN,
)
from .state import ENTRY_COUNTER, ENTRY_NONE, ENTRY_REGISTER, ObjectStore
from . import wire


class ApplyResult(IntEnum):
    APPLIED = 1
    DUPLICATE = 2
    STALE_EPOCH = 3


def validate_op(op: OpPayload, object_type: ObjectType) -> None:
    if object_type not in (ObjectType.COUNTER, ObjectType.SET, ObjectType.MAP):
        raise InvalidOperation(f"not an application object type: {object_type}")
    if op.kind not in LEGAL_OPS[object_type]:
        raise InvalidOperation(f"op {op.kind.name} illegal for {object_type.name}")
    if isinstance(op, (CounterAdd, MapCounterAdd)):
        if not I64_MIN <= op.delta <= I64_MAX:
            raise InvalidOperation("delta out of 64-bit range")
    if isinstance(op, MapPut):
        validate_scalar(op.value)
    if isinstance(op, (SetAdd, SetRemove, MapSetAdd, MapSetRemove)):
        if not isinstance(op.element, bytes):
            raise InvalidOperation("set elements are byte strings")


class Replica:
    """One replica's in-memory state plus its Lamport clock."""

    def __init__(self, replica_id: str, config: Optional[ReplicaConfig] = None):
        validate_replica_id(replica_id)
        self.replica_id = replica_id
        self.config = config or ReplicaConfig()
        self.clock = 0
        self.epoch = 0
        self.next_seq = 1
        self.store = ObjectStore()
        self.applied = VersionVector()
        self.log: List[Update] = []
        # Updates are immutable; their wire bytes are cached for sync reuse.
        self.update_bytes: dict = {}
        # Stamp of the Reset that established the current epoch, if any.
        self.current_reset_stamp: Optional[LamportStamp] = None
        # Incremental sync-payload cache: (log length, last sort key, blob).
        self._sync_cache: Optional[tuple] = None

    # -- reads ------------------------------------------------------------

    def access(self, object_id: str, type_hint: Optional[ObjectType] = None) -> ValueView:
        """Resolved read-only view; never mutates state, never ticks."""
        if type_hint is None:
            for candidate in (ObjectType.COUNTER, ObjectType.SET, ObjectType.MAP):
                if self.store.get(object_id, candidate) is not None:
                    type_hint = candidate
                    break
            else:
                return ValueView("absent")
        state = self.store.get(object_id, type_hint)
        if type_hint == ObjectType.COUNTER:
            return ValueView("counter", state.value() if state else 0)
        if type_hint == ObjectType.SET:
            return ValueView("set", state.elements() if state else [])
        items = []
        if state is not None:
            for key in sorted(state.entries, key=lambda k: k.encode("utf-8")):
                kind, payload = state.entries[key].resolve()
                if kind == ENTRY_NONE:
                    continue
                if kind == ENTRY_REGISTER:
                    items.append((key, payload[0]))
                elif kind == ENTRY_COUNTER:
                    items.append((key, ("counter", sum(d for d, _ in payload.values()))))
                else:
                    adds, _ = payload
                    items.append((key, sorted({el for el, _ in adds.values()})))
        return ValueView("map", items)

    def state_digest(self) -> bytes:
        return wire.state_digest_bytes(self.store)

    # -- writes -----------------------------------------------------------

    def local_update(self, object_id: str, object_type: ObjectType, op: OpPayload) -> Update:
        """Originate an update: tick, stamp, apply, return it.

        Rejections happen before the clock ticks or a seq is consumed.
        """
        if isinstance(op, Reset):
            raise InvalidOperation("Reset cannot be issued as an application update")
        validate_op(op, object_type)
        self.clock += 1
        u = Update(
            id=UpdateId(self.replica_id, self.next_seq),
            stamp=LamportStamp(self.clock, self.replica_id),
            epoch=self.epoch,
            object_id=object_id,
            object_type=object_type,
            op=op,
        )
        self.next_seq += 1
        result = self.apply_update(u)
        assert result == ApplyResult.APPLIED
        return u

    def originate_reset(self, snapshot: bytes) -> Update:
        """Build and apply a Reset advancing to epoch+1 (rollback path)."""
        self.clock += 1
        u = Update(
            id=UpdateId(self.replica_id, self.next_seq),
            stamp=LamportStamp(self.clock, self.replica_id),
            epoch=self.epoch + 1,
            object_id="",
            object_type=ObjectType.STORE,
            op=Reset(self.epoch + 1, snapshot),
        )
        self.next_seq += 1
        result = self.apply_update(u)
        assert result == ApplyResult.APPLIED
        return u

    def apply_update(self, u: Update) -> ApplyResult:
        if self.applied.contains(u.id):
            return ApplyResult.DUPLICATE
        if u.epoch < self.epoch:
            return ApplyResult.STALE_EPOCH
        if u.is_reset():
            return self._apply_reset(u)
        if self.clock < u.stamp.lamport:
            self.clock = u.stamp.lamport
        self.store.apply_op(u)
        self.log.append(u)
        self.applied.record(u.id)
        return ApplyResult.APPLIED

    def _apply_reset(self, u: Update) -> ApplyResult:
        op = u.op
        if op.new_epoch == self.epoch:
            # Concurrent Reset at the current epoch: greater stamp wins;
            # a loser is recorded (it still propagates) but has no effect.
            if self.current_reset_stamp is not None and u.stamp < self.current_reset_stamp:
                if self.clock < u.stamp.lamport:
                    self.clock = u.stamp.lamport
                self.log.append(u)
                self.applied.record(u.id)
                return ApplyResult.APPLIED
        try:
            new_store = wire.canonical_state_decode(op.snapshot)
        except DecodeError as exc:
            # No state was touched; the batch carrying this update aborts.
            raise MalformedUpdate(f"undecodable Reset snapshot: {exc}") from exc
        if self.clock < u.stamp.lamport:
            self.clock = u.stamp.lamport
        retained = [x for x in self.log if x.epoch >= op.new_epoch]
        self.epoch = op.new_epoch
        self.store = new_store
        self.log = retained + [u]
        self._sync_cache = None
        self.applied.rebuild(x.id for x in self.log)
        for x in retained:
            if not x.is_reset():
                self.store.apply_op(x)
        self.current_reset_stamp = u.stamp
        return ApplyResult.APPLIED

    # -- sync support -------------------------------------------------------

    def build_sync_message(self) -> wire.SyncMessage:
        updates = sorted(self.log, key=Update.sort_key)
        return wire.SyncMessage(
            sender=self.replica_id,
            sender_epoch=self.epoch,
            version_vector=self.applied.to_sorted_items(),
            updates=updates,
        )

    def encode_sync(self) -> bytes:
        """Encoded full-log sync message.

        The updates blob is cached and extended in place while the log
        grows in sorted order (the common all-local-updates case); any
        out-of-order append falls back to a full rebuild.
        """
        log = self.log
        blob: Optional[bytes] = None
        cache = self._sync_cache
        if cache is not None:
            count, last_key, cached_blob = cache
            if count <= len(log):
                tail = log[count:]
                keys = [u.sort_key() for u in tail]
                if all(b > a for a, b in zip([last_key] + keys, keys)):
                    parts = [cached_blob]
                    for u in tail:
                        enc = self.update_bytes.get(u.id)
                        if enc is None:
                            enc = wire.encode_update(u)
                            self.update_bytes[u.id] = enc
                        parts.append(enc)
                    blob = b"".join(parts)
                    if keys:
                        last_key = keys[-1]
        if blob is None:
            ordered = sorted(log, key=Update.sort_key)
            parts = []
            for u in ordered:
                enc = self.update_bytes.get(u.id)
                if enc is None:
                    enc = wire.encode_update(u)
                    self.update_bytes[u.id] = enc
                parts.append(enc)
            blob = b"".join(parts)
            last_key = ordered[-1].sort_key() if ordered else (b"", 0)
        self._sync_cache = (len(log), last_key, blob)
        return wire.encode_sync_header(
            self.replica_id, self.epoch, self.applied.to_sorted_items(), len(log)
        ) + blob
