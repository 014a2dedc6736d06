"""ReplicaNode: one replica wired to its WAL, checkpoint store, and
plug-in event dispatch.  All methods here must be called from a single
logical event loop (the simulation driver, the service loop, or a test).

Durability ordering: an update is applied in memory, written to the WAL,
and only then dispatched to plug-ins and acknowledged, all within one
loop turn, so no sync can observe an un-flushed update.
"""

from __future__ import annotations

import os
from typing import Callable, Optional, Tuple

from .errors import MalformedUpdate, PersistenceError
from .model import (
    MergeReport,
    ObjectType,
    OpPayload,
    ReplicaConfig,
    Update,
    UpdateId,
    ValueView,
)
from .persistence import CheckpointStore, SnapshotStore, Wal, recover
from .replica import ApplyResult, Replica
from . import wire


class ReplicaNode:
    def __init__(
        self,
        replica: Replica,
        data_dir: Optional[str] = None,
        plugins=None,
        fresh_wal: bool = False,
    ):
        self.replica = replica
        self.data_dir = data_dir
        self.plugins = plugins
        self.wal: Optional[Wal] = None
        self.snapshots: Optional[SnapshotStore] = None
        self.checkpoints: Optional[CheckpointStore] = None
        if data_dir is not None:
            os.makedirs(data_dir, exist_ok=True)
            self.wal = Wal(
                os.path.join(data_dir, "wal.log"),
                fsync_every_record=replica.config.fsync_every_record,
            )
            self.snapshots = SnapshotStore(data_dir)
            self.checkpoints = CheckpointStore(data_dir)
        # Set by the transport owner; () -> (update_count, peer_count).
        self.sync_hook: Optional[Callable[[], Tuple[int, int]]] = None
        self.applied_local = 0
        self.applied_remote = 0

    @classmethod
    def recover_from(
        cls,
        data_dir: str,
        replica_id: str,
        config: Optional[ReplicaConfig] = None,
        plugins=None,
    ) -> "ReplicaNode":
        replica = recover(data_dir, replica_id, config)
        return cls(replica, data_dir=data_dir, plugins=plugins)

    @property
    def replica_id(self) -> str:
        return self.replica.replica_id

    def digest(self) -> bytes:
        return self.replica.state_digest()

    # -- core functions ----------------------------------------------------

    def access(self, object_id: str, type_hint: Optional[ObjectType] = None) -> ValueView:
        view = self.replica.access(object_id, type_hint)
        self._dispatch("access", None, wire.encode_value_view(view))
        return view

    def local_update(self, object_id: str, object_type: ObjectType, op: OpPayload) -> Update:
        u = self.replica.local_update(object_id, object_type, op)
        self._persist(u)
        self.applied_local += 1
        self._dispatch("update", u, b"")
        return u

    def originate_reset(self, snapshot: bytes) -> Update:
        u = self.replica.originate_reset(snapshot)
        self._persist(u)
        self.applied_local += 1
        self._dispatch("update", u, b"")
        return u

    def handle_sync(self, m: wire.SyncMessage) -> MergeReport:
        """Merge: apply the message's updates one by one, in order.

        Each update is individually atomic; a malformed one aborts the
        remainder of the batch while already-applied updates stay applied.
        """
        report = MergeReport()
        for u in m.updates:
            try:
                result = self.replica.apply_update(u)
            except MalformedUpdate as exc:
                report.error = str(exc)
                break
            if result == ApplyResult.APPLIED:
                self._persist(u)
                self.applied_remote += 1
                report.applied += 1
                self._dispatch("merge", u, b"\x01")
            elif result == ApplyResult.DUPLICATE:
                report.duplicates += 1
            else:
                report.stale += 1
        return report

    def handle_sync_bytes(self, payload: bytes) -> MergeReport:
        """Merge an encoded sync message, decoding lazily.

        Updates the replica already applied (or that are epoch-stale) are
        counted from their cheap structural headers without full decode;
        outcomes are identical to decoding everything and merging.
        """
        sender, sender_epoch, vv, spans = wire.scan_sync_payload(payload)
        report = MergeReport()
        replica = self.replica
        cur_rid_bytes, cur_rid, cur_high = None, "", 0
        for rid_bytes, seq, epoch, start, end in spans:
            # Spans arrive grouped by origin; decode each origin id once.
            if rid_bytes != cur_rid_bytes:
                cur_rid_bytes = rid_bytes
                cur_rid = rid_bytes.decode("utf-8")
                cur_high = replica.applied.contiguous.get(cur_rid, 0)
            if seq <= cur_high or replica.applied.contains(UpdateId(cur_rid, seq)):
                report.duplicates += 1
                continue
            if epoch < replica.epoch:
                report.stale += 1
                continue
            u = wire.decode_update(payload[start:end])
            try:
                result = replica.apply_update(u)
            except MalformedUpdate as exc:
                report.error = str(exc)
                break
            if result == ApplyResult.APPLIED:
                replica.update_bytes[u.id] = payload[start:end]
                self._persist(u)
                self.applied_remote += 1
                report.applied += 1
                self._dispatch("merge", u, b"\x01")
            elif result == ApplyResult.DUPLICATE:
                report.duplicates += 1
            else:
                report.stale += 1
        return report

    def build_sync(self) -> wire.SyncMessage:
        return self.replica.build_sync_message()

    def encode_sync(self) -> bytes:
        return self.replica.encode_sync()

    def record_sync(self, update_count: int, peer_count: int) -> None:
        self._dispatch("sync", None, wire.encode_sync_stats(update_count, peer_count))

    def request_sync(self) -> Tuple[int, int]:
        """Trigger a broadcast through whatever transport owns this node."""
        if self.sync_hook is None:
            return (len(self.replica.log), 0)
        return self.sync_hook()

    # -- checkpoints / rollback ---------------------------------------------

    def checkpoint(self, label: str) -> None:
        if self.checkpoints is None:
            raise PersistenceError("node has no data dir; checkpoints unavailable")
        self.checkpoints.save(self.replica, label)

    def restore(self, label: str) -> Update:
        if self.checkpoints is None:
            raise PersistenceError("node has no data dir; checkpoints unavailable")
        body = self.checkpoints.load(label).body
        return self.originate_reset(body)

    def write_snapshot(self) -> int:
        if self.snapshots is None or self.wal is None:
            raise PersistenceError("node has no data dir; snapshots unavailable")
        return self.snapshots.write(self.replica, self.wal.absolute_record_count)

    # -- plumbing -----------------------------------------------------------

    def _persist(self, u: Update) -> None:
        if self.wal is not None:
            enc = self.replica.update_bytes.get(u.id)
            if enc is None:
                enc = wire.encode_update(u)
                self.replica.update_bytes[u.id] = enc
            self.wal.append(u, enc)

    def _dispatch(self, core_function: str, update: Optional[Update], result_view: bytes) -> None:
        if self.plugins is not None:
            self.plugins.dispatch_event(core_function, self.replica_id, update, result_view)

    def pump_plugins(self) -> int:
        if self.plugins is None:
            return 0
        return self.plugins.pump(self)

    def close(self) -> None:
        if self.plugins is not None:
            self.plugins.close()
        if self.wal is not None:
            self.wal.close()
