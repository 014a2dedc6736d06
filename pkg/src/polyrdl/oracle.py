"""Brute-force reference fold: the independent semantics oracle.

Given a finite set of updates, folds them sequentially in the canonical
order (epoch, lamport, replica_id, seq) into a resolved state, applying
the declared conflict rules directly.  This module intentionally shares
no code with the replica/state implementation: it keeps its own plain
dict model, resolves conflicts terminally, decodes Reset snapshots with
its own reader, and emits the canonical state encoding with its own
writer.  Byte equality against a replica's digest therefore checks both
the conflict semantics and the encoding independently.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Dict, List, Optional, Tuple

from .model import (
    CounterAdd,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    Reset,
    SetAdd,
    SetRemove,
    Update,
)

_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")
_I64 = struct.Struct(">q")
_F64 = struct.Struct(">d")

Tag = Tuple[str, int]  # (replica_id, seq)
StampKey = Tuple[int, bytes]


class _OCounter:
    def __init__(self):
        self.contribs: Dict[Tag, Tuple[int, int]] = {}  # tag -> (lamport, delta)


class _OSet:
    def __init__(self):
        self.live: Dict[Tag, Tuple[int, bytes]] = {}  # tag -> (lamport, element)
        self.removed: set = set()


class _OEntry:
    def __init__(self):
        self.tomb: Optional[StampKey] = None
        self.puts: List[Tuple[StampKey, object]] = []  # (stamp, scalar)
        self.ctr: Dict[Tag, Tuple[int, int]] = {}
        self.adds: Dict[Tag, Tuple[int, bytes]] = {}
        self.removes: List[Tuple[StampKey, Tuple[Tag, ...]]] = []
        self.killed: set = set()


class OracleState:
    def __init__(self):
        # (object_id, type_byte) -> typed model
        self.objects: Dict[Tuple[str, int], object] = {}

    def counter(self, oid: str) -> _OCounter:
        return self.objects.setdefault((oid, 1), _OCounter())

    def set_(self, oid: str) -> _OSet:
        return self.objects.setdefault((oid, 2), _OSet())

    def map_(self, oid: str) -> Dict[str, _OEntry]:
        return self.objects.setdefault((oid, 3), {})


def _skey(u: Update) -> StampKey:
    return (u.stamp.lamport, u.stamp.replica_id.encode("utf-8"))


def _tag_skey(tag: Tag, lamport: int) -> StampKey:
    return (lamport, tag[0].encode("utf-8"))


def _fold_one(state: OracleState, u: Update) -> None:
    op = u.op
    tag: Tag = (u.id.replica_id, u.id.seq)
    lam = u.stamp.lamport
    if isinstance(op, CounterAdd):
        state.counter(u.object_id).contribs[tag] = (lam, op.delta)
    elif isinstance(op, SetAdd):
        s = state.set_(u.object_id)
        if tag not in s.removed:
            s.live[tag] = (lam, op.element)
    elif isinstance(op, SetRemove):
        s = state.set_(u.object_id)
        for t in op.observed_tags:
            ot = (t.replica_id, t.seq)
            s.removed.add(ot)
            s.live.pop(ot, None)
    else:
        entries = state.map_(u.object_id)
        entry = entries.setdefault(op.key, _OEntry())
        skey = _skey(u)
        if isinstance(op, MapRemoveKey):
            if entry.tomb is None or skey > entry.tomb:
                entry.tomb = skey
                entry.puts = [p for p in entry.puts if p[0] > skey]
                entry.ctr = {
                    t: v for t, v in entry.ctr.items() if _tag_skey(t, v[0]) > skey
                }
                entry.adds = {
                    t: v for t, v in entry.adds.items() if _tag_skey(t, v[0]) > skey
                }
                entry.removes = [r for r in entry.removes if r[0] > skey]
                entry.killed = set()
                for _, observed in entry.removes:
                    entry.killed.update(observed)
            return
        if entry.tomb is not None and skey <= entry.tomb:
            return
        if isinstance(op, MapPut):
            entry.puts.append((skey, op.value))
        elif isinstance(op, MapCounterAdd):
            entry.ctr[tag] = (lam, op.delta)
        elif isinstance(op, MapSetAdd):
            if tag not in entry.killed:
                entry.adds[tag] = (lam, op.element)
        elif isinstance(op, MapSetRemove):
            observed = tuple((t.replica_id, t.seq) for t in op.observed_tags)
            entry.removes.append((skey, observed))
            for ot in observed:
                entry.killed.add(ot)
                entry.adds.pop(ot, None)
        else:
            raise AssertionError(f"unhandled op {op!r}")


def oracle_fold(updates) -> OracleState:
    """Fold a finite update set; delivery order is irrelevant by design."""
    by_id: Dict[Tuple[str, int], Update] = {}
    for u in updates:
        by_id.setdefault((u.id.replica_id, u.id.seq), u)
    pool = sorted(
        by_id.values(),
        key=lambda u: (u.epoch, u.stamp.lamport, u.stamp.replica_id.encode("utf-8"), u.id.seq),
    )
    resets = [u for u in pool if isinstance(u.op, Reset)]
    if resets:
        baseline = max(resets, key=lambda u: (u.op.new_epoch, _skey(u)))
        state = _decode_snapshot(baseline.op.snapshot)
        floor = baseline.op.new_epoch
        for u in pool:
            if u.epoch >= floor and not isinstance(u.op, Reset):
                _fold_one(state, u)
    else:
        state = OracleState()
        for u in pool:
            _fold_one(state, u)
    return state


# ---------------------------------------------------------------------------
# Canonical encoding, written independently against the same layout.

def _w_str(parts, s: str) -> None:
    raw = s.encode("utf-8")
    parts.append(_U32.pack(len(raw)))
    parts.append(raw)


def _w_bytes(parts, raw: bytes) -> None:
    parts.append(_U32.pack(len(raw)))
    parts.append(raw)


def _w_scalar(parts, value) -> None:
    if isinstance(value, bool):
        parts.append(b"\x03\x01" if value else b"\x03\x00")
    elif isinstance(value, int):
        parts.append(b"\x01")
        parts.append(_I64.pack(value))
    elif isinstance(value, float):
        parts.append(b"\x02")
        parts.append(_F64.pack(value))
    elif isinstance(value, str):
        parts.append(b"\x04")
        _w_str(parts, value)
    else:
        parts.append(b"\x05")
        _w_bytes(parts, value)


def _w_counter_body(parts, contribs: Dict[Tag, Tuple[int, int]]) -> None:
    parts.append(_U32.pack(len(contribs)))
    for tag in sorted(contribs, key=lambda t: (t[0].encode("utf-8"), t[1])):
        lamport, delta = contribs[tag]
        _w_str(parts, tag[0])
        parts.append(_U64.pack(tag[1]))
        parts.append(_U64.pack(lamport))
        parts.append(_I64.pack(delta))


def _w_set_body(parts, live: Dict[Tag, Tuple[int, bytes]], removed) -> None:
    grouped: Dict[bytes, Dict[Tag, int]] = {}
    for tag, (lamport, element) in live.items():
        grouped.setdefault(element, {})[tag] = lamport
    parts.append(_U32.pack(len(grouped)))
    for element in sorted(grouped):
        _w_bytes(parts, element)
        tags = grouped[element]
        parts.append(_U32.pack(len(tags)))
        for tag in sorted(tags, key=lambda t: (t[0].encode("utf-8"), t[1])):
            _w_str(parts, tag[0])
            parts.append(_U64.pack(tag[1]))
            parts.append(_U64.pack(tags[tag]))
    rem = sorted(removed, key=lambda t: (t[0].encode("utf-8"), t[1]))
    parts.append(_U32.pack(len(rem)))
    for tag in rem:
        _w_str(parts, tag[0])
        parts.append(_U64.pack(tag[1]))


def _entry_resolution(entry: _OEntry):
    """-> (kind byte, best put) after terminal type arbitration."""
    best_key: Optional[StampKey] = None
    best_kind = 0
    best_put = None
    for skey, scalar in entry.puts:
        if best_key is None or skey > best_key:
            best_key, best_kind = skey, 1
        if best_put is None or skey > best_put[0]:
            best_put = (skey, scalar)
    for tag, (lamport, _) in entry.ctr.items():
        skey = _tag_skey(tag, lamport)
        if best_key is None or skey > best_key:
            best_key, best_kind = skey, 2
    for tag, (lamport, _) in entry.adds.items():
        skey = _tag_skey(tag, lamport)
        if best_key is None or skey > best_key:
            best_key, best_kind = skey, 3
    for skey, _ in entry.removes:
        if best_key is None or skey > best_key:
            best_key, best_kind = skey, 3
    return best_kind, best_put


def oracle_encode(state: OracleState) -> bytes:
    parts: list = []
    slots = sorted(state.objects, key=lambda s: (s[0].encode("utf-8"), s[1]))
    parts.append(_U32.pack(len(slots)))
    for oid, type_byte in slots:
        obj = state.objects[(oid, type_byte)]
        _w_str(parts, oid)
        parts.append(bytes((type_byte,)))
        if type_byte == 1:
            _w_counter_body(parts, obj.contribs)
        elif type_byte == 2:
            _w_set_body(parts, obj.live, obj.removed)
        else:
            parts.append(_U32.pack(len(obj)))
            for key in sorted(obj, key=lambda k: k.encode("utf-8")):
                entry = obj[key]
                _w_str(parts, key)
                if entry.tomb is None:
                    parts.append(b"\x00")
                else:
                    parts.append(b"\x01")
                    parts.append(_U64.pack(entry.tomb[0]))
                    _w_bytes(parts, entry.tomb[1])
                kind, best_put = _entry_resolution(entry)
                parts.append(bytes((kind,)))
                if kind == 1:
                    skey, scalar = best_put
                    _w_scalar(parts, scalar)
                    parts.append(_U64.pack(skey[0]))
                    _w_bytes(parts, skey[1])
                elif kind == 2:
                    _w_counter_body(parts, entry.ctr)
                elif kind == 3:
                    killed = set()
                    for _, observed in entry.removes:
                        killed.update(observed)
                    _w_set_body(parts, entry.adds, killed)
    return b"".join(parts)


def oracle_digest(updates) -> bytes:
    return hashlib.sha256(oracle_encode(oracle_fold(updates))).digest()


# ---------------------------------------------------------------------------
# Snapshot reader (the Reset baseline), kept local to stay independent.

class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def u8(self) -> int:
        b = self.data[self.pos]
        self.pos += 1
        return b

    def u32(self) -> int:
        v = _U32.unpack_from(self.data, self.pos)[0]
        self.pos += 4
        return v

    def u64(self) -> int:
        v = _U64.unpack_from(self.data, self.pos)[0]
        self.pos += 8
        return v

    def i64(self) -> int:
        v = _I64.unpack_from(self.data, self.pos)[0]
        self.pos += 8
        return v

    def raw(self, n: int) -> bytes:
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def bytes_(self) -> bytes:
        return self.raw(self.u32())

    def str_(self) -> str:
        return self.bytes_().decode("utf-8")

    def scalar(self):
        t = self.u8()
        if t == 1:
            return self.i64()
        if t == 2:
            v = _F64.unpack_from(self.data, self.pos)[0]
            self.pos += 8
            return v
        if t == 3:
            return self.u8() == 1
        if t == 4:
            return self.str_()
        return self.bytes_()


def _read_set_body(r: _Reader, s: _OSet) -> None:
    for _ in range(r.u32()):
        element = r.bytes_()
        for _ in range(r.u32()):
            rid = r.str_()
            seq = r.u64()
            s.live[(rid, seq)] = (r.u64(), element)
    for _ in range(r.u32()):
        s.removed.add((r.str_(), r.u64()))


def _decode_snapshot(data: bytes) -> OracleState:
    r = _Reader(data)
    state = OracleState()
    for _ in range(r.u32()):
        oid = r.str_()
        type_byte = r.u8()
        if type_byte == 1:
            c = _OCounter()
            for _ in range(r.u32()):
                rid = r.str_()
                seq = r.u64()
                lamport = r.u64()
                c.contribs[(rid, seq)] = (lamport, r.i64())
            state.objects[(oid, 1)] = c
        elif type_byte == 2:
            s = _OSet()
            _read_set_body(r, s)
            state.objects[(oid, 2)] = s
        else:
            entries: Dict[str, _OEntry] = {}
            for _ in range(r.u32()):
                key = r.str_()
                entry = _OEntry()
                if r.u8() == 1:
                    lamport = r.u64()
                    entry.tomb = (lamport, r.bytes_())
                kind = r.u8()
                if kind == 1:
                    scalar = r.scalar()
                    lamport = r.u64()
                    entry.puts.append(((lamport, r.bytes_()), scalar))
                elif kind == 2:
                    for _ in range(r.u32()):
                        rid = r.str_()
                        seq = r.u64()
                        lamport = r.u64()
                        entry.ctr[(rid, seq)] = (lamport, r.i64())
                elif kind == 3:
                    tmp = _OSet()
                    _read_set_body(r, tmp)
                    entry.adds = dict(tmp.live)
                    if tmp.removed:
                        # Bare kill set from the snapshot: one synthetic
                        # minimal-stamp remove record, pruned by any later
                        # tombstone.
                        observed = tuple(
                            sorted(tmp.removed, key=lambda t: (t[0].encode("utf-8"), t[1]))
                        )
                        entry.removes.append(((0, b""), observed))
                        entry.killed = set(tmp.removed)
                entries[key] = entry
            state.objects[(oid, 3)] = entries
    return state
