"""Durable write-ahead log, snapshots, and named checkpoints.

On-disk formats (all integers big-endian):

wal.log            sequence of records: u32 body_len | u32 crc32c(body) |
                   body, where body = encode_update(u).  A torn tail (a
                   record that cannot be fully read at EOF) is truncated
                   on recovery; interior corruption is a hard error.

snap-<n>.bin,      one self-validating container:
checkpoints/         magic "HRS1" | u8 version=1 | str label |
<label>.bin          u64 epoch | u64 clock | u64 next_seq |
                     u8 has_reset_stamp [u64 lamport | str replica_id] |
                     version vector (u32 n + (str rid, u64 seq)*) |
                     out-of-order applied ids (u32 n + (str rid, u64 seq)*) |
                     u64 wal_record_index |
                     bytes body (canonical state encoding) |
                     u32 crc32c over everything before it.

Snapshot writes go to a temp file and rename into place, so a crash mid-
write leaves the previous snapshot intact.  WAL records at or before a
snapshot's wal_record_index become prunable; pruning is explicit and
trades away the ability to re-send pruned updates to peers that never
received them.
"""

from __future__ import annotations

import os
import re
import struct
from typing import List, Optional, Tuple

from .errors import DecodeError, PersistenceError, WalCorruption
from .model import LamportStamp, ReplicaConfig, Update, UpdateId
from .replica import Replica
from . import wire

_U32 = struct.Struct(">I")

SNAP_MAGIC = b"HRS1"
SNAP_VERSION = 1


def read_wal_base(path: str) -> int:
    """Absolute index of the WAL file's first record (nonzero after pruning)."""
    base_path = path + ".base"
    if not os.path.exists(base_path):
        return 0
    with open(base_path, "r", encoding="ascii") as f:
        return int(f.read().strip())


def _write_wal_base(path: str, base: int) -> None:
    tmp = path + ".base.tmp"
    with open(tmp, "w", encoding="ascii") as f:
        f.write(f"{base}\n")
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path + ".base")


class Wal:
    def __init__(self, path: str, fsync_every_record: bool = True):
        self.path = path
        self.fsync_every_record = fsync_every_record
        self._f = open(path, "ab")
        self.base = read_wal_base(path)
        self.record_count = count_wal_records(path)

    @property
    def absolute_record_count(self) -> int:
        return self.base + self.record_count

    def append(self, u: Update, encoded: Optional[bytes] = None) -> None:
        body = encoded if encoded is not None else wire.encode_update(u)
        try:
            self._f.write(_U32.pack(len(body)) + _U32.pack(wire.crc32c(body)) + body)
            self._f.flush()
            if self.fsync_every_record:
                os.fsync(self._f.fileno())
        except (OSError, ValueError) as exc:
            # Fail-stop: a replica that cannot persist must not ack.
            raise PersistenceError(f"WAL append failed: {exc}") from exc
        self.record_count += 1

    def sync(self) -> None:
        self._f.flush()
        os.fsync(self._f.fileno())

    def close(self) -> None:
        self._f.close()


def scan_wal(path: str) -> Tuple[List[bytes], int, bool]:
    """-> (record bodies, clean byte length, torn_tail).

    Raises WalCorruption for interior damage, where bytes beyond the bad
    record still parse or the bad record does not extend to EOF.
    """
    if not os.path.exists(path):
        return [], 0, False
    with open(path, "rb") as f:
        data = f.read()
    bodies: List[bytes] = []
    off = 0
    size = len(data)
    while off < size:
        if off + 8 > size:
            return bodies, off, True
        (length,) = _U32.unpack_from(data, off)
        (crc,) = _U32.unpack_from(data, off + 4)
        end = off + 8 + length
        if end > size:
            return bodies, off, True
        body = data[off + 8 : end]
        if wire.crc32c(body) != crc:
            if end == size:
                return bodies, off, True
            raise WalCorruption(f"CRC mismatch in interior record at offset {off}")
        bodies.append(body)
        off = end
    return bodies, off, False


def count_wal_records(path: str) -> int:
    bodies, _, torn = scan_wal(path)
    if torn:
        raise PersistenceError("WAL has a torn tail; run recovery first")
    return len(bodies)


def wal_prune(path: str, keep_from_record: int) -> None:
    """Drop records below the ABSOLUTE index keep_from_record.

    Pruned records must be covered by a snapshot whose wal_record_index
    is at least keep_from_record; a base sidecar keeps absolute indices
    stable across prunes.
    """
    bodies, _, torn = scan_wal(path)
    if torn:
        raise PersistenceError("refusing to prune a torn WAL")
    base = read_wal_base(path)
    drop = max(0, keep_from_record - base)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        for body in bodies[drop:]:
            f.write(_U32.pack(len(body)) + _U32.pack(wire.crc32c(body)) + body)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    _write_wal_base(path, base + drop)


# ---------------------------------------------------------------------------
# Snapshot / checkpoint container

def encode_container(
    label: str,
    epoch: int,
    clock: int,
    next_seq: int,
    reset_stamp: Optional[LamportStamp],
    vv_items,
    ooo_ids,
    wal_record_index: int,
    body: bytes,
) -> bytes:
    parts: list = [SNAP_MAGIC, bytes((SNAP_VERSION,))]

    def w_str(s: str) -> None:
        raw = s.encode("utf-8")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)

    w_str(label)
    parts.append(struct.pack(">QQQ", epoch, clock, next_seq))
    if reset_stamp is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(struct.pack(">Q", reset_stamp.lamport))
        w_str(reset_stamp.replica_id)
    vv = sorted(vv_items, key=lambda kv: kv[0].encode("utf-8"))
    parts.append(_U32.pack(len(vv)))
    for rid, seq in vv:
        w_str(rid)
        parts.append(struct.pack(">Q", seq))
    ooo = sorted(ooo_ids, key=lambda i: (i.replica_id.encode("utf-8"), i.seq))
    parts.append(_U32.pack(len(ooo)))
    for uid in ooo:
        w_str(uid.replica_id)
        parts.append(struct.pack(">Q", uid.seq))
    parts.append(struct.pack(">Q", wal_record_index))
    parts.append(_U32.pack(len(body)))
    parts.append(body)
    blob = b"".join(parts)
    return blob + _U32.pack(wire.crc32c(blob))


class Container:
    def __init__(self, label, epoch, clock, next_seq, reset_stamp, vv, ooo, wal_record_index, body):
        self.label = label
        self.epoch = epoch
        self.clock = clock
        self.next_seq = next_seq
        self.reset_stamp = reset_stamp
        self.vv = vv
        self.ooo = ooo
        self.wal_record_index = wal_record_index
        self.body = body


def decode_container(data: bytes) -> Container:
    if len(data) < 9 or data[:4] != SNAP_MAGIC:
        raise PersistenceError("bad snapshot magic")
    if data[4] != SNAP_VERSION:
        raise PersistenceError(f"unknown snapshot version {data[4]}")
    blob, tail = data[:-4], data[-4:]
    if _U32.unpack(tail)[0] != wire.crc32c(blob):
        raise PersistenceError("snapshot CRC mismatch")
    cur = wire.Cursor(data, 5)
    label = cur.str_()
    epoch = cur.u64()
    clock = cur.u64()
    next_seq = cur.u64()
    reset_stamp = None
    if cur.u8() == 1:
        lamport = cur.u64()
        reset_stamp = LamportStamp(lamport, cur.str_())
    vv = [(cur.str_(), cur.u64()) for _ in range(cur.u32())]
    ooo = [UpdateId(cur.str_(), cur.u64()) for _ in range(cur.u32())]
    wal_record_index = cur.u64()
    body = cur.bytes_()
    return Container(label, epoch, clock, next_seq, reset_stamp, vv, ooo, wal_record_index, body)


def replica_container(replica: Replica, label: str, wal_record_index: int) -> bytes:
    ooo = [
        UpdateId(rid, seq)
        for rid, pend in replica.applied.pending.items()
        for seq in sorted(pend)
    ]
    return encode_container(
        label,
        replica.epoch,
        replica.clock,
        replica.next_seq,
        replica.current_reset_stamp,
        replica.applied.to_sorted_items(),
        ooo,
        wal_record_index,
        wire.canonical_state_encode(replica.store),
    )


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


_SNAP_RE = re.compile(r"^snap-(\d+)\.bin$")


class SnapshotStore:
    def __init__(self, directory: str):
        self.dir = directory
        os.makedirs(directory, exist_ok=True)

    def _numbers(self) -> List[int]:
        out = []
        for name in os.listdir(self.dir):
            m = _SNAP_RE.match(name)
            if m:
                out.append(int(m.group(1)))
        return sorted(out)

    def write(self, replica: Replica, wal_record_index: int) -> int:
        numbers = self._numbers()
        n = (numbers[-1] + 1) if numbers else 1
        data = replica_container(replica, "", wal_record_index)
        _atomic_write(os.path.join(self.dir, f"snap-{n}.bin"), data)
        return n

    def load_latest(self) -> Optional[Container]:
        for n in reversed(self._numbers()):
            path = os.path.join(self.dir, f"snap-{n}.bin")
            try:
                with open(path, "rb") as f:
                    return decode_container(f.read())
            except (PersistenceError, OSError):
                continue  # fall back to the previous snapshot
        return None


class CheckpointStore:
    def __init__(self, directory: str):
        self.dir = os.path.join(directory, "checkpoints")
        os.makedirs(self.dir, exist_ok=True)

    def _path(self, label: str) -> str:
        if not label or "/" in label or label.startswith("."):
            raise PersistenceError(f"bad checkpoint label {label!r}")
        return os.path.join(self.dir, f"{label}.bin")

    def save(self, replica: Replica, label: str) -> None:
        path = self._path(label)
        if os.path.exists(path):
            raise PersistenceError(f"duplicate checkpoint label {label!r}")
        _atomic_write(path, replica_container(replica, label, 0))

    def load(self, label: str) -> Container:
        path = self._path(label)
        if not os.path.exists(path):
            raise PersistenceError(f"unknown checkpoint {label!r}")
        with open(path, "rb") as f:
            return decode_container(f.read())

    def labels(self) -> List[str]:
        return sorted(n[:-4] for n in os.listdir(self.dir) if n.endswith(".bin"))


# ---------------------------------------------------------------------------
# Recovery

def recover(directory: str, replica_id: str, config: Optional[ReplicaConfig] = None) -> Replica:
    """Rebuild a replica from durable storage.

    Loads the latest valid snapshot (if any), truncates a torn WAL tail,
    and replays the WAL suffix through apply_update.  The result equals
    the pre-crash state of the durable prefix.
    """
    replica = Replica(replica_id, config)
    snaps = SnapshotStore(directory)
    snap = snaps.load_latest()
    wal_path = os.path.join(directory, "wal.log")
    start_record = 0
    if snap is not None:
        replica.epoch = snap.epoch
        replica.clock = snap.clock
        replica.next_seq = snap.next_seq
        replica.current_reset_stamp = snap.reset_stamp
        replica.store = wire.canonical_state_decode(snap.body)
        for rid, seq in snap.vv:
            replica.applied.contiguous[rid] = seq
        for uid in snap.ooo:
            replica.applied.record(uid)
        start_record = snap.wal_record_index

    bodies, clean_len, torn = scan_wal(wal_path)
    if torn:
        with open(wal_path, "r+b") as f:
            f.truncate(clean_len)
    start_record = max(0, start_record - read_wal_base(wal_path))
    for body in bodies[start_record:]:
        try:
            u = wire.decode_update(body)
        except DecodeError as exc:
            raise WalCorruption(f"undecodable WAL record: {exc}") from exc
        replica.apply_update(u)
        if u.id.replica_id == replica_id and u.id.seq >= replica.next_seq:
            replica.next_seq = u.id.seq + 1
    return replica
