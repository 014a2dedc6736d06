"""Canonical binary encodings: updates, frames, sync messages, plug-in
traffic, and the canonical state encoding behind digests and snapshots.

Primitive rules (all integers big-endian, fixed width):
  u8/u16/u32/u64      1/2/4/8 bytes
  i64                 8 bytes two's complement
  str / bytes         u32 length prefix + raw (str is UTF-8, validated)
  list                u32 count + elements
  float64             8 bytes IEEE-754, must be finite
  bool                1 byte, strictly 0x00/0x01

Encoding is canonical: equal abstract values produce identical bytes, so
byte equality of digests witnesses state equality across implementations.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Dict, Iterable, List, Optional, Tuple

from .errors import DecodeError, FrameError, TrailingBytesError, TruncatedError
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
    OpKind,
    Reset,
    Scalar,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
    ValueView,
)
from .state import (
    ENTRY_COUNTER,
    ENTRY_NONE,
    ENTRY_REGISTER,
    ENTRY_SET,
    CounterState,
    MapEntry,
    MapState,
    ObjectStore,
    SetState,
)

MAGIC = b"HRM1"
WIRE_VERSION = 1
DEFAULT_FRAME_CAP = 64 * 1024 * 1024

MSG_SYNC = 0x01
MSG_PLUGIN_EVENT = 0x10
MSG_PLUGIN_CMD = 0x11
MSG_PLUGIN_ERR = 0x12
MSG_PLUGIN_HELLO = 0x13
KNOWN_MSG_TYPES = frozenset(
    {MSG_SYNC, MSG_PLUGIN_EVENT, MSG_PLUGIN_CMD, MSG_PLUGIN_ERR, MSG_PLUGIN_HELLO}
)

SCALAR_INT = 0x01
SCALAR_FLOAT = 0x02
SCALAR_BOOL = 0x03
SCALAR_STR = 0x04
SCALAR_BYTES = 0x05

_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")


# ---------------------------------------------------------------------------
# CRC32C (Castagnoli), table-driven; check value crc32c(b"123456789") is
# 0xE3069283.

def _make_crc32c_table() -> List[int]:
    poly = 0x82F63B78
    table = []
    for n in range(256):
        crc = n
        for _ in range(8):
            crc = (crc >> 1) ^ poly if crc & 1 else crc >> 1
        table.append(crc)
    return table


_CRC32C_TABLE = _make_crc32c_table()


def crc32c(data: bytes, crc: int = 0) -> int:
    crc ^= 0xFFFFFFFF
    table = _CRC32C_TABLE
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF


# ---------------------------------------------------------------------------
# Primitive writers (append to a parts list) and the reading cursor.

def _w_u8(parts: list, v: int) -> None:
    parts.append(bytes((v,)))


def _w_u16(parts: list, v: int) -> None:
    parts.append(_U16.pack(v))


def _w_u32(parts: list, v: int) -> None:
    parts.append(_U32.pack(v))


def _w_u64(parts: list, v: int) -> None:
    parts.append(_U64.pack(v))


def _w_i64(parts: list, v: int) -> None:
    parts.append(_I64.pack(v))


def _w_bytes(parts: list, v: bytes) -> None:
    parts.append(_U32.pack(len(v)))
    parts.append(v)


def _w_str(parts: list, v: str) -> None:
    _w_bytes(parts, v.encode("utf-8"))


class Cursor:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def _need(self, n: int) -> int:
        pos = self.pos
        if pos + n > len(self.data):
            raise TruncatedError(f"need {n} bytes at offset {pos}, have {len(self.data) - pos}")
        self.pos = pos + n
        return pos

    def u8(self) -> int:
        return self.data[self._need(1)]

    def u16(self) -> int:
        return _U16.unpack_from(self.data, self._need(2))[0]

    def u32(self) -> int:
        return _U32.unpack_from(self.data, self._need(4))[0]

    def u64(self) -> int:
        return _U64.unpack_from(self.data, self._need(8))[0]

    def i64(self) -> int:
        return _I64.unpack_from(self.data, self._need(8))[0]

    def f64(self) -> float:
        return _F64.unpack_from(self.data, self._need(8))[0]

    def raw(self, n: int) -> bytes:
        pos = self._need(n)
        return bytes(self.data[pos : pos + n])

    def bytes_(self) -> bytes:
        n = self.u32()
        return self.raw(n)

    def str_(self) -> str:
        raw = self.bytes_()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid UTF-8 at offset {self.pos}: {exc}", kind="utf8")

    def done(self) -> None:
        if self.pos != len(self.data):
            raise TrailingBytesError(f"{len(self.data) - self.pos} trailing bytes")


# ---------------------------------------------------------------------------
# Scalars

def encode_scalar_into(parts: list, value: Scalar) -> None:
    if isinstance(value, bool):
        parts.append(b"\x03\x01" if value else b"\x03\x00")
    elif isinstance(value, int):
        _w_u8(parts, SCALAR_INT)
        _w_i64(parts, value)
    elif isinstance(value, float):
        _w_u8(parts, SCALAR_FLOAT)
        parts.append(_F64.pack(value))
    elif isinstance(value, str):
        _w_u8(parts, SCALAR_STR)
        _w_str(parts, value)
    elif isinstance(value, bytes):
        _w_u8(parts, SCALAR_BYTES)
        _w_bytes(parts, value)
    else:
        raise DecodeError(f"unsupported scalar {type(value).__name__}")


def decode_scalar(cur: Cursor) -> Scalar:
    tag = cur.u8()
    if tag == SCALAR_INT:
        return cur.i64()
    if tag == SCALAR_FLOAT:
        value = cur.f64()
        if value != value or value in (float("inf"), float("-inf")):
            raise DecodeError("non-finite float scalar", kind="nonfinite")
        if value == 0.0 and _F64.pack(value) != b"\x00" * 8:
            raise DecodeError("non-canonical negative zero", kind="nonfinite")
        return value
    if tag == SCALAR_BOOL:
        b = cur.u8()
        if b not in (0, 1):
            raise DecodeError(f"bad bool byte {b:#x}")
        return b == 1
    if tag == SCALAR_STR:
        return cur.str_()
    if tag == SCALAR_BYTES:
        return cur.bytes_()
    raise DecodeError(f"unknown scalar tag {tag:#x}", kind="unknown-tag")


# ---------------------------------------------------------------------------
# Updates

def _w_update_id(parts: list, uid: UpdateId) -> None:
    _w_str(parts, uid.replica_id)
    _w_u64(parts, uid.seq)


def _r_update_id(cur: Cursor) -> UpdateId:
    rid = cur.str_()
    return UpdateId(rid, cur.u64())


def encode_update(u: Update) -> bytes:
    parts: list = []
    _w_str(parts, u.id.replica_id)
    _w_u64(parts, u.id.seq)
    _w_u64(parts, u.stamp.lamport)
    _w_u64(parts, u.epoch)
    _w_str(parts, u.object_id)
    _w_u8(parts, int(u.object_type))
    op = u.op
    _w_u8(parts, int(op.kind))
    if isinstance(op, CounterAdd):
        _w_i64(parts, op.delta)
    elif isinstance(op, SetAdd):
        _w_bytes(parts, op.element)
    elif isinstance(op, SetRemove):
        _w_bytes(parts, op.element)
        _w_u32(parts, len(op.observed_tags))
        for tag in op.observed_tags:
            _w_update_id(parts, tag)
    elif isinstance(op, MapPut):
        _w_str(parts, op.key)
        encode_scalar_into(parts, op.value)
    elif isinstance(op, MapRemoveKey):
        _w_str(parts, op.key)
    elif isinstance(op, MapCounterAdd):
        _w_str(parts, op.key)
        _w_i64(parts, op.delta)
    elif isinstance(op, MapSetAdd):
        _w_str(parts, op.key)
        _w_bytes(parts, op.element)
    elif isinstance(op, MapSetRemove):
        _w_str(parts, op.key)
        _w_bytes(parts, op.element)
        _w_u32(parts, len(op.observed_tags))
        for tag in op.observed_tags:
            _w_update_id(parts, tag)
    elif isinstance(op, Reset):
        _w_u64(parts, op.new_epoch)
        _w_bytes(parts, op.snapshot)
    else:
        raise DecodeError(f"unhandled op {op!r}")
    return b"".join(parts)


def decode_update_at(cur: Cursor) -> Update:
    rid = cur.str_()
    seq = cur.u64()
    lamport = cur.u64()
    epoch = cur.u64()
    object_id = cur.str_()
    raw_type = cur.u8()
    try:
        object_type = ObjectType(raw_type)
    except ValueError:
        raise DecodeError(f"unknown object type {raw_type:#x}", kind="unknown-tag")
    raw_kind = cur.u8()
    try:
        kind = OpKind(raw_kind)
    except ValueError:
        raise DecodeError(f"unknown op kind {raw_kind:#x}", kind="unknown-tag")

    if kind == OpKind.COUNTER_ADD:
        op = CounterAdd(cur.i64())
    elif kind == OpKind.SET_ADD:
        op = SetAdd(cur.bytes_())
    elif kind == OpKind.SET_REMOVE:
        element = cur.bytes_()
        op = SetRemove(element, tuple(_r_update_id(cur) for _ in range(cur.u32())))
    elif kind == OpKind.MAP_PUT:
        key = cur.str_()
        op = MapPut(key, decode_scalar(cur))
    elif kind == OpKind.MAP_REMOVE_KEY:
        op = MapRemoveKey(cur.str_())
    elif kind == OpKind.MAP_COUNTER_ADD:
        key = cur.str_()
        op = MapCounterAdd(key, cur.i64())
    elif kind == OpKind.MAP_SET_ADD:
        key = cur.str_()
        op = MapSetAdd(key, cur.bytes_())
    elif kind == OpKind.MAP_SET_REMOVE:
        key = cur.str_()
        element = cur.bytes_()
        op = MapSetRemove(key, element, tuple(_r_update_id(cur) for _ in range(cur.u32())))
    else:
        new_epoch = cur.u64()
        if new_epoch == 0:
            raise DecodeError("Reset.new_epoch must be > 0")
        op = Reset(new_epoch, cur.bytes_())

    try:
        return Update(
            id=UpdateId(rid, seq),
            stamp=LamportStamp(lamport, rid),
            epoch=epoch,
            object_id=object_id,
            object_type=object_type,
            op=op,
        )
    except Exception as exc:
        raise DecodeError(f"ill-formed update: {exc}")


def decode_update(data: bytes) -> Update:
    cur = Cursor(data)
    u = decode_update_at(cur)
    cur.done()
    return u


def _skip_len_prefixed(data: bytes, pos: int) -> int:
    if pos + 4 > len(data):
        raise TruncatedError("truncated length prefix")
    (n,) = _U32.unpack_from(data, pos)
    end = pos + 4 + n
    if end > len(data):
        raise TruncatedError("truncated length-prefixed field")
    return end


def _skip_fixed(data: bytes, pos: int, n: int) -> int:
    end = pos + n
    if end > len(data):
        raise TruncatedError("truncated fixed field")
    return end


def peek_update_header(data: bytes, pos: int):
    """Cheap structural read of (rid_bytes, seq, lamport, epoch, after_pos)."""
    end_rid = _skip_len_prefixed(data, pos)
    rid_bytes = bytes(data[pos + 4 : end_rid])
    after = _skip_fixed(data, end_rid, 24)
    seq, lamport, epoch = struct.unpack_from(">QQQ", data, end_rid)
    return rid_bytes, seq, lamport, epoch, after


def skip_update(data: bytes, pos: int) -> int:
    """Advance past one encoded update without building objects."""
    _, _, _, _, pos = peek_update_header(data, pos)
    pos = _skip_len_prefixed(data, pos)  # object_id
    pos = _skip_fixed(data, pos, 2)  # object_type, op_kind
    kind = data[pos - 1]
    if kind == OpKind.COUNTER_ADD:
        return _skip_fixed(data, pos, 8)
    if kind == OpKind.SET_ADD:
        return _skip_len_prefixed(data, pos)
    if kind in (OpKind.SET_REMOVE, OpKind.MAP_SET_REMOVE):
        if kind == OpKind.MAP_SET_REMOVE:
            pos = _skip_len_prefixed(data, pos)  # key
        pos = _skip_len_prefixed(data, pos)  # element
        if pos + 4 > len(data):
            raise TruncatedError("truncated observed list")
        (count,) = _U32.unpack_from(data, pos)
        pos += 4
        for _ in range(count):
            pos = _skip_len_prefixed(data, pos)
            pos = _skip_fixed(data, pos, 8)
        return pos
    if kind == OpKind.MAP_PUT:
        pos = _skip_len_prefixed(data, pos)  # key
        pos = _skip_fixed(data, pos, 1)
        tag = data[pos - 1]
        if tag in (SCALAR_INT, SCALAR_FLOAT):
            return _skip_fixed(data, pos, 8)
        if tag == SCALAR_BOOL:
            return _skip_fixed(data, pos, 1)
        if tag in (SCALAR_STR, SCALAR_BYTES):
            return _skip_len_prefixed(data, pos)
        raise DecodeError(f"unknown scalar tag {tag:#x}", kind="unknown-tag")
    if kind == OpKind.MAP_REMOVE_KEY:
        return _skip_len_prefixed(data, pos)
    if kind == OpKind.MAP_COUNTER_ADD:
        pos = _skip_len_prefixed(data, pos)
        return _skip_fixed(data, pos, 8)
    if kind == OpKind.MAP_SET_ADD:
        pos = _skip_len_prefixed(data, pos)
        return _skip_len_prefixed(data, pos)
    if kind == OpKind.RESET:
        pos = _skip_fixed(data, pos, 8)
        return _skip_len_prefixed(data, pos)
    raise DecodeError(f"unknown op kind {kind:#x}", kind="unknown-tag")


# ---------------------------------------------------------------------------
# Frames

def encode_frame(msg_type: int, payload: bytes) -> bytes:
    if len(payload) > 0xFFFFFFFF:
        raise FrameError("payload too large")
    return b"".join((MAGIC, b"\x01", bytes((msg_type,)), _U32.pack(len(payload)), payload))


def decode_frame(data: bytes, offset: int = 0, max_len: int = DEFAULT_FRAME_CAP):
    """Decode one frame starting at ``offset``.

    Returns (msg_type, payload, next_offset), or None if the buffer holds
    a valid prefix of a frame and more bytes are needed.  Bad magic,
    unknown version/msg_type, and oversize lengths raise FrameError and
    must be treated as connection-fatal.
    """
    avail = len(data) - offset
    if avail >= 4:
        if data[offset : offset + 4] != MAGIC:
            raise FrameError("bad magic", kind="bad-magic")
    elif data[offset : offset + avail] != MAGIC[:avail]:
        raise FrameError("bad magic", kind="bad-magic")
    if avail < 10:
        return None
    version = data[offset + 4]
    if version != WIRE_VERSION:
        raise FrameError(f"unknown version {version}", kind="bad-version")
    msg_type = data[offset + 5]
    if msg_type not in KNOWN_MSG_TYPES:
        raise FrameError(f"unknown msg_type {msg_type:#x}", kind="bad-msg-type")
    (length,) = _U32.unpack_from(data, offset + 6)
    if length > max_len:
        raise FrameError(f"frame length {length} exceeds cap {max_len}", kind="oversize")
    end = offset + 10 + length
    if len(data) < end:
        return None
    return msg_type, bytes(data[offset + 10 : end]), end


class FrameBuffer:
    """Incrementally reassembles frames from a byte stream."""

    def __init__(self, max_len: int = DEFAULT_FRAME_CAP):
        self.max_len = max_len
        self._buf = bytearray()

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    def next_frame(self) -> Optional[Tuple[int, bytes]]:
        got = decode_frame(bytes(self._buf), 0, self.max_len)
        if got is None:
            return None
        msg_type, payload, end = got
        del self._buf[:end]
        return msg_type, payload


# ---------------------------------------------------------------------------
# Sync messages

class SyncMessage:
    __slots__ = ("sender", "sender_epoch", "version_vector", "updates")

    def __init__(self, sender: str, sender_epoch: int, version_vector, updates):
        self.sender = sender
        self.sender_epoch = sender_epoch
        self.version_vector = list(version_vector)  # [(replica_id, max_seq)]
        self.updates = list(updates)

    def __eq__(self, other):
        return (
            isinstance(other, SyncMessage)
            and self.sender == other.sender
            and self.sender_epoch == other.sender_epoch
            and self.version_vector == other.version_vector
            and self.updates == other.updates
        )

    def __repr__(self):
        return (
            f"SyncMessage(sender={self.sender!r}, epoch={self.sender_epoch}, "
            f"vv={self.version_vector!r}, updates={len(self.updates)})"
        )


def encode_sync(m: SyncMessage, update_bytes: Optional[Dict[UpdateId, bytes]] = None) -> bytes:
    """Encode a sync message; ``update_bytes`` is an optional per-update
    encoding cache (updates are immutable, so their bytes never change)."""
    parts: list = []
    _w_str(parts, m.sender)
    _w_u64(parts, m.sender_epoch)
    vv = sorted(m.version_vector, key=lambda kv: kv[0].encode("utf-8"))
    _w_u32(parts, len(vv))
    for rid, max_seq in vv:
        _w_str(parts, rid)
        _w_u64(parts, max_seq)
    updates = sorted(m.updates, key=lambda u: u.sort_key())
    _w_u32(parts, len(updates))
    if update_bytes is None:
        for u in updates:
            parts.append(encode_update(u))
    else:
        for u in updates:
            enc = update_bytes.get(u.id)
            if enc is None:
                enc = encode_update(u)
                update_bytes[u.id] = enc
            parts.append(enc)
    return b"".join(parts)


def encode_sync_header(sender: str, sender_epoch: int, vv_items, update_count: int) -> bytes:
    """Everything before the updates blob; vv_items must be pre-sorted."""
    parts: list = []
    _w_str(parts, sender)
    _w_u64(parts, sender_epoch)
    _w_u32(parts, len(vv_items))
    for rid, max_seq in vv_items:
        _w_str(parts, rid)
        _w_u64(parts, max_seq)
    _w_u32(parts, update_count)
    return b"".join(parts)


def decode_sync(data: bytes) -> SyncMessage:
    cur = Cursor(data)
    sender = cur.str_()
    sender_epoch = cur.u64()
    vv = []
    prev_rid: Optional[bytes] = None
    for _ in range(cur.u32()):
        rid = cur.str_()
        seq = cur.u64()
        rb = rid.encode("utf-8")
        if prev_rid is not None and rb <= prev_rid:
            raise DecodeError("version vector not sorted/unique", kind="malformed-sync")
        prev_rid = rb
        vv.append((rid, seq))
    updates = []
    prev_key = None
    for _ in range(cur.u32()):
        u = decode_update_at(cur)
        key = u.sort_key()
        if prev_key is not None and key <= prev_key:
            raise DecodeError("updates not sorted/unique", kind="malformed-sync")
        prev_key = key
        updates.append(u)
    cur.done()
    return SyncMessage(sender, sender_epoch, vv, updates)


def scan_sync_payload(data: bytes):
    """Structurally walk an encoded sync message without decoding updates.

    -> (sender, sender_epoch, vv, spans) where each span is
    (rid_bytes, seq, epoch, start, end).  Applies the same sortedness and
    uniqueness validation as decode_sync, up front, so callers can apply
    update-by-update afterwards without partial-batch surprises.
    """
    cur = Cursor(data)
    sender = cur.str_()
    sender_epoch = cur.u64()
    vv = []
    prev_rid: Optional[bytes] = None
    for _ in range(cur.u32()):
        rid = cur.str_()
        seq = cur.u64()
        rb = rid.encode("utf-8")
        if prev_rid is not None and rb <= prev_rid:
            raise DecodeError("version vector not sorted/unique", kind="malformed-sync")
        prev_rid = rb
        vv.append((rid, seq))
    count = cur.u32()
    spans = []
    prev_key = None
    pos = cur.pos
    for _ in range(count):
        rid_bytes, seq, _, epoch, _ = peek_update_header(data, pos)
        key = (rid_bytes, seq)
        if prev_key is not None and key <= prev_key:
            raise DecodeError("updates not sorted/unique", kind="malformed-sync")
        prev_key = key
        end = skip_update(data, pos)
        spans.append((rid_bytes, seq, epoch, pos, end))
        pos = end
    if pos != len(data):
        raise TrailingBytesError(f"{len(data) - pos} trailing bytes")
    return sender, sender_epoch, vv, spans


# ---------------------------------------------------------------------------
# Canonical state encoding (digest input and Reset/checkpoint body)

def _id_sort_key(uid: UpdateId) -> Tuple[bytes, int]:
    return (uid.replica_id.encode("utf-8"), uid.seq)


def _w_counter_body(parts: list, contributions: Dict[UpdateId, Tuple[int, int]]) -> None:
    _w_u32(parts, len(contributions))
    for uid in sorted(contributions, key=_id_sort_key):
        delta, lamport = contributions[uid]
        _w_str(parts, uid.replica_id)
        _w_u64(parts, uid.seq)
        _w_u64(parts, lamport)
        _w_i64(parts, delta)


def _w_set_body(
    parts: list,
    live: Dict[bytes, Dict[UpdateId, int]],
    removed: Iterable[UpdateId],
) -> None:
    _w_u32(parts, len(live))
    for element in sorted(live):
        _w_bytes(parts, element)
        tags = live[element]
        _w_u32(parts, len(tags))
        for tag in sorted(tags, key=_id_sort_key):
            _w_str(parts, tag.replica_id)
            _w_u64(parts, tag.seq)
            _w_u64(parts, tags[tag])
    removed_sorted = sorted(removed, key=_id_sort_key)
    _w_u32(parts, len(removed_sorted))
    for tag in removed_sorted:
        _w_str(parts, tag.replica_id)
        _w_u64(parts, tag.seq)


def _group_adds(adds: Dict[UpdateId, Tuple[bytes, int]]) -> Dict[bytes, Dict[UpdateId, int]]:
    grouped: Dict[bytes, Dict[UpdateId, int]] = {}
    for tag, (element, lamport) in adds.items():
        grouped.setdefault(element, {})[tag] = lamport
    return grouped


def canonical_state_encode(store: ObjectStore) -> bytes:
    parts: list = []
    slots = sorted(store.objects, key=lambda s: (s[0].encode("utf-8"), s[1]))
    _w_u32(parts, len(slots))
    for object_id, type_byte in slots:
        state = store.objects[(object_id, type_byte)]
        _w_str(parts, object_id)
        _w_u8(parts, type_byte)
        if type_byte == int(ObjectType.COUNTER):
            _w_counter_body(parts, state.contributions)
        elif type_byte == int(ObjectType.SET):
            _w_set_body(parts, state.live, state.removed)
        else:
            entries = state.entries
            _w_u32(parts, len(entries))
            for key in sorted(entries, key=lambda k: k.encode("utf-8")):
                entry = entries[key]
                _w_str(parts, key)
                if entry.tombstone is None:
                    _w_u8(parts, 0)
                else:
                    _w_u8(parts, 1)
                    lamport, rid_bytes = entry.tombstone
                    _w_u64(parts, lamport)
                    _w_bytes(parts, rid_bytes)
                kind, payload = entry.resolve()
                _w_u8(parts, kind)
                if kind == ENTRY_REGISTER:
                    scalar, lamport, rid = payload
                    encode_scalar_into(parts, scalar)
                    _w_u64(parts, lamport)
                    _w_str(parts, rid)
                elif kind == ENTRY_COUNTER:
                    _w_counter_body(parts, payload)
                elif kind == ENTRY_SET:
                    adds, removed = payload
                    _w_set_body(parts, _group_adds(adds), removed)
    return b"".join(parts)


def canonical_state_decode(data: bytes) -> ObjectStore:
    cur = Cursor(data)
    store = ObjectStore()
    for _ in range(cur.u32()):
        object_id = cur.str_()
        type_byte = cur.u8()
        if type_byte == int(ObjectType.COUNTER):
            counter = CounterState()
            for _ in range(cur.u32()):
                uid = _r_update_id(cur)
                lamport = cur.u64()
                counter.add(uid, lamport, cur.i64())
            store.objects[(object_id, type_byte)] = counter
        elif type_byte == int(ObjectType.SET):
            sstate = SetState()
            _decode_set_body(cur, sstate)
            store.objects[(object_id, type_byte)] = sstate
        elif type_byte == int(ObjectType.MAP):
            mstate = MapState()
            for _ in range(cur.u32()):
                key = cur.str_()
                entry = MapEntry()
                if cur.u8() == 1:
                    lamport = cur.u64()
                    entry.tombstone = (lamport, cur.bytes_())
                kind = cur.u8()
                if kind == ENTRY_REGISTER:
                    scalar = decode_scalar(cur)
                    lamport = cur.u64()
                    rid = cur.str_()
                    entry.put = (scalar, (lamport, rid.encode("utf-8")), lamport, rid)
                elif kind == ENTRY_COUNTER:
                    for _ in range(cur.u32()):
                        uid = _r_update_id(cur)
                        lamport = cur.u64()
                        entry.ctr[uid] = (cur.i64(), lamport)
                elif kind == ENTRY_SET:
                    tmp = SetState()
                    _decode_set_body(cur, tmp)
                    for element, tags in tmp.live.items():
                        for tag, lamport in tags.items():
                            entry.adds[tag] = (element, lamport)
                    if tmp.removed:
                        # Snapshots collapse remove records into one bare
                        # kill set; rebuild it as a minimal-stamp record so
                        # any later tombstone prunes it entirely.
                        entry.removes.append(((0, b""), tuple(sorted(tmp.removed, key=_id_sort_key))))
                        entry.removed_tags = set(tmp.removed)
                elif kind != ENTRY_NONE:
                    raise DecodeError(f"unknown entry kind {kind:#x}", kind="unknown-tag")
                mstate.entries[key] = entry
            store.objects[(object_id, type_byte)] = mstate
        else:
            raise DecodeError(f"unknown object type {type_byte:#x}", kind="unknown-tag")
    cur.done()
    return store


def _decode_set_body(cur: Cursor, sstate: SetState) -> None:
    for _ in range(cur.u32()):
        element = cur.bytes_()
        for _ in range(cur.u32()):
            tag = _r_update_id(cur)
            lamport = cur.u64()
            sstate.live.setdefault(element, {})[tag] = lamport
            sstate.tag_index[tag] = element
    for _ in range(cur.u32()):
        sstate.removed.add(_r_update_id(cur))


def state_digest_bytes(store: ObjectStore) -> bytes:
    return hashlib.sha256(canonical_state_encode(store)).digest()


# ---------------------------------------------------------------------------
# Value views (access results, also used by plug-in traffic)

VIEW_ABSENT = 0x00
VIEW_COUNTER = 0x01
VIEW_SET = 0x02
VIEW_MAP = 0x03


def encode_value_view(view: ValueView) -> bytes:
    parts: list = []
    if view.kind == "absent":
        _w_u8(parts, VIEW_ABSENT)
    elif view.kind == "counter":
        _w_u8(parts, VIEW_COUNTER)
        _w_i64(parts, view.value)
    elif view.kind == "set":
        _w_u8(parts, VIEW_SET)
        _w_u32(parts, len(view.value))
        for element in view.value:
            _w_bytes(parts, element)
    elif view.kind == "map":
        _w_u8(parts, VIEW_MAP)
        _w_u32(parts, len(view.value))
        for key, resolved in view.value:
            _w_str(parts, key)
            if isinstance(resolved, list):
                _w_u8(parts, 3)
                _w_u32(parts, len(resolved))
                for element in resolved:
                    _w_bytes(parts, element)
            elif isinstance(resolved, tuple) and resolved[0] == "counter":
                _w_u8(parts, 2)
                _w_i64(parts, resolved[1])
            else:
                _w_u8(parts, 1)
                encode_scalar_into(parts, resolved)
    else:
        raise DecodeError(f"unknown view kind {view.kind!r}")
    return b"".join(parts)


def decode_value_view(data: bytes) -> ValueView:
    cur = Cursor(data)
    marker = cur.u8()
    if marker == VIEW_ABSENT:
        view = ValueView("absent")
    elif marker == VIEW_COUNTER:
        view = ValueView("counter", cur.i64())
    elif marker == VIEW_SET:
        view = ValueView("set", [cur.bytes_() for _ in range(cur.u32())])
    elif marker == VIEW_MAP:
        items = []
        for _ in range(cur.u32()):
            key = cur.str_()
            vkind = cur.u8()
            if vkind == 1:
                items.append((key, decode_scalar(cur)))
            elif vkind == 2:
                items.append((key, ("counter", cur.i64())))
            elif vkind == 3:
                items.append((key, [cur.bytes_() for _ in range(cur.u32())]))
            else:
                raise DecodeError(f"unknown map view kind {vkind:#x}", kind="unknown-tag")
        view = ValueView("map", items)
    else:
        raise DecodeError(f"unknown view marker {marker:#x}", kind="unknown-tag")
    cur.done()
    return view


# ---------------------------------------------------------------------------
# Plug-in protocol payloads

class PluginHello:
    __slots__ = ("plugin_id", "schema_version")

    def __init__(self, plugin_id: str, schema_version: int):
        self.plugin_id = plugin_id
        self.schema_version = schema_version


class PluginEvent:
    __slots__ = ("event_seq", "core_function", "replica_id", "update", "result_view")

    def __init__(self, event_seq, core_function, replica_id, update, result_view):
        self.event_seq = event_seq
        self.core_function = core_function
        self.replica_id = replica_id
        self.update = update
        self.result_view = result_view


class PluginCommand:
    __slots__ = ("cmd_seq", "core_function", "args")

    def __init__(self, cmd_seq, core_function, args):
        self.cmd_seq = cmd_seq
        self.core_function = core_function
        self.args = args


class PluginErrorMsg:
    __slots__ = ("ref_seq", "code", "message")

    def __init__(self, ref_seq, code, message):
        self.ref_seq = ref_seq
        self.code = code
        self.message = message


def encode_hello(h: PluginHello) -> bytes:
    parts: list = []
    _w_str(parts, h.plugin_id)
    _w_u32(parts, h.schema_version)
    return b"".join(parts)


def decode_hello(data: bytes) -> PluginHello:
    cur = Cursor(data)
    h = PluginHello(cur.str_(), cur.u32())
    cur.done()
    return h


def encode_event(e: PluginEvent) -> bytes:
    parts: list = []
    _w_u64(parts, e.event_seq)
    _w_str(parts, e.core_function)
    _w_str(parts, e.replica_id)
    if e.update is None:
        _w_u8(parts, 0)
    else:
        _w_u8(parts, 1)
        parts.append(encode_update(e.update))
    _w_bytes(parts, e.result_view)
    return b"".join(parts)


def decode_event(data: bytes) -> PluginEvent:
    cur = Cursor(data)
    event_seq = cur.u64()
    core_function = cur.str_()
    replica_id = cur.str_()
    update = decode_update_at(cur) if cur.u8() == 1 else None
    result_view = cur.bytes_()
    cur.done()
    return PluginEvent(event_seq, core_function, replica_id, update, result_view)


def encode_command(c: PluginCommand) -> bytes:
    parts: list = []
    _w_u64(parts, c.cmd_seq)
    _w_str(parts, c.core_function)
    _w_bytes(parts, c.args)
    return b"".join(parts)


def decode_command(data: bytes) -> PluginCommand:
    cur = Cursor(data)
    c = PluginCommand(cur.u64(), cur.str_(), cur.bytes_())
    cur.done()
    return c


def encode_plugin_error(e: PluginErrorMsg) -> bytes:
    parts: list = []
    _w_u64(parts, e.ref_seq)
    _w_u16(parts, e.code)
    _w_str(parts, e.message)
    return b"".join(parts)


def decode_plugin_error(data: bytes) -> PluginErrorMsg:
    cur = Cursor(data)
    e = PluginErrorMsg(cur.u64(), cur.u16(), cur.str_())
    cur.done()
    return e


# Command argument layouts, one per core function.

def encode_access_args(object_id: str, type_hint: int = 0) -> bytes:
    parts: list = []
    _w_str(parts, object_id)
    _w_u8(parts, type_hint)
    return b"".join(parts)


def decode_access_args(data: bytes) -> Tuple[str, int]:
    cur = Cursor(data)
    out = (cur.str_(), cur.u8())
    cur.done()
    return out


def encode_update_args(object_id: str, object_type: int, op) -> bytes:
    # Reuses the op-field layout of encode_update by framing a bare op.
    parts: list = []
    _w_str(parts, object_id)
    _w_u8(parts, object_type)
    _w_u8(parts, int(op.kind))
    tail = encode_update(
        Update(
            id=UpdateId("x", 1),
            stamp=LamportStamp(1, "x"),
            epoch=0 if not isinstance(op, Reset) else op.new_epoch,
            object_id=object_id,
            object_type=ObjectType(object_type),
            op=op,
        )
    )
    # strip the header the dummy encode produced: rid,seq,lamport,epoch,object_id,type,kind
    skip = Cursor(tail)
    skip.str_()
    skip.u64()
    skip.u64()
    skip.u64()
    skip.str_()
    skip.u8()
    skip.u8()
    parts.append(tail[skip.pos :])
    return b"".join(parts)


def decode_update_args(data: bytes):
    """-> (object_id, object_type, op); reuses the update op decoder."""
    cur = Cursor(data)
    object_id = cur.str_()
    object_type = cur.u8()
    # Re-frame as a full update so the op decoder can run unchanged.
    parts: list = []
    _w_str(parts, "x")
    _w_u64(parts, 1)
    _w_u64(parts, 1)
    _w_u64(parts, 1)
    _w_str(parts, object_id)
    _w_u8(parts, object_type)
    parts.append(data[cur.pos :])
    u = decode_update(b"".join(parts))
    return object_id, u.object_type, u.op


def encode_label_args(label: str) -> bytes:
    parts: list = []
    _w_str(parts, label)
    return b"".join(parts)


def decode_label_args(data: bytes) -> str:
    cur = Cursor(data)
    label = cur.str_()
    cur.done()
    return label


def encode_merge_report(r: MergeReport) -> bytes:
    parts: list = []
    _w_u64(parts, r.applied)
    _w_u64(parts, r.duplicates)
    _w_u64(parts, r.stale)
    return b"".join(parts)


def decode_merge_report(data: bytes) -> MergeReport:
    cur = Cursor(data)
    r = MergeReport(cur.u64(), cur.u64(), cur.u64())
    cur.done()
    return r


def encode_sync_stats(update_count: int, peer_count: int) -> bytes:
    parts: list = []
    _w_u64(parts, update_count)
    _w_u32(parts, peer_count)
    return b"".join(parts)


def decode_sync_stats(data: bytes) -> Tuple[int, int]:
    cur = Cursor(data)
    out = (cur.u64(), cur.u32())
    cur.done()
    return out
