"""Codec tests: golden byte layouts, round-trip identity, decode totality."""

import math
import os
import random

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from polyrdl import wire
from polyrdl.errors import DecodeError, FrameError, TrailingBytesError
from polyrdl.model import (
    CounterAdd,
    LamportStamp,
    MapPut,
    ObjectType,
    Update,
    UpdateId,
)

from conftest import updates

TESTDATA = os.path.join(os.path.dirname(__file__), "..", "testdata")


def make_update(delta=5):
    return Update(
        id=UpdateId("A", 1),
        stamp=LamportStamp(1, "A"),
        epoch=0,
        object_id="c",
        object_type=ObjectType.COUNTER,
        op=CounterAdd(delta),
    )


def test_update_golden_layout():
    # Hand-assembled: rid "A", seq 1, lamport 1, epoch 0, object "c",
    # type 0x01, kind 0x01, delta 5 as big-endian i64.
    expected = bytes.fromhex(
        "0000000141"
        "0000000000000001"
        "0000000000000001"
        "0000000000000000"
        "0000000163"
        "01"
        "01"
        "0000000000000005"
    )
    assert wire.encode_update(make_update()) == expected


def test_frame_golden_empty_sync():
    assert wire.encode_frame(0x01, b"") == bytes.fromhex("48524d31010100000000")


def test_frame_bad_magic():
    with pytest.raises(FrameError):
        wire.decode_frame(b"XXXX" + bytes(8))


def test_frame_unknown_version_and_type():
    frame = bytearray(wire.encode_frame(0x01, b"hi"))
    frame[4] = 9
    with pytest.raises(FrameError):
        wire.decode_frame(bytes(frame))
    frame[4] = 1
    frame[5] = 0x77
    with pytest.raises(FrameError):
        wire.decode_frame(bytes(frame))


def test_frame_oversize_cap():
    frame = wire.encode_frame(0x01, b"x" * 100)
    with pytest.raises(FrameError):
        wire.decode_frame(frame, max_len=10)


def test_two_concatenated_frames_zero_residue():
    a = wire.encode_frame(0x01, b"one")
    b = wire.encode_frame(0x10, b"two!")
    stream = a + b
    msg1, payload1, end1 = wire.decode_frame(stream)
    msg2, payload2, end2 = wire.decode_frame(stream, end1)
    assert (msg1, payload1) == (0x01, b"one")
    assert (msg2, payload2) == (0x10, b"two!")
    assert end2 == len(stream)


def test_partial_frame_returns_none():
    frame = wire.encode_frame(0x01, b"payload")
    for cut in range(len(frame)):
        assert wire.decode_frame(frame[:cut]) is None or cut >= len(frame)


def test_crc32c_check_value():
    assert wire.crc32c(b"123456789") == 0xE3069283
    assert wire.crc32c(b"") == 0


@settings(max_examples=400, deadline=None)
@given(updates(include_reset=True))
def test_update_round_trip(u):
    encoded = wire.encode_update(u)
    assert wire.decode_update(encoded) == u
    # canonical: re-encoding the decoded value is byte-identical
    assert wire.encode_update(wire.decode_update(encoded)) == encoded


@settings(max_examples=200, deadline=None)
@given(updates())
def test_update_truncation_detected(u):
    encoded = wire.encode_update(u)
    with pytest.raises(DecodeError):
        wire.decode_update(encoded[:-1])


def test_update_trailing_bytes_detected():
    encoded = wire.encode_update(make_update()) + b"\x00"
    with pytest.raises(TrailingBytesError):
        wire.decode_update(encoded)


@settings(max_examples=300, deadline=None)
@given(updates(include_reset=True))
def test_skip_update_matches_full_decode(u):
    encoded = wire.encode_update(u)
    assert wire.skip_update(encoded, 0) == len(encoded)
    rid_bytes, seq, lamport, epoch, _ = wire.peek_update_header(encoded, 0)
    assert rid_bytes.decode() == u.id.replica_id
    assert (seq, lamport, epoch) == (u.id.seq, u.stamp.lamport, u.epoch)


def test_scalar_negative_zero_rejected():
    u = Update(
        id=UpdateId("A", 1),
        stamp=LamportStamp(1, "A"),
        epoch=0,
        object_id="m",
        object_type=ObjectType.MAP,
        op=MapPut("k", 1.5),
    )
    encoded = bytearray(wire.encode_update(u))
    import struct

    encoded[-8:] = struct.pack(">d", -0.0)
    with pytest.raises(DecodeError):
        wire.decode_update(bytes(encoded))
    encoded[-8:] = struct.pack(">d", math.nan)
    with pytest.raises(DecodeError):
        wire.decode_update(bytes(encoded))


def test_negative_zero_normalized_at_construction():
    op = MapPut("k", -0.0)
    assert str(op.value) == "0.0"


def test_sync_empty_round_trip():
    msg = wire.SyncMessage("A", 0, [], [])
    assert wire.decode_sync(wire.encode_sync(msg)) == msg


def test_sync_rejects_unsorted_updates():
    u1 = make_update()
    u2 = Update(
        id=UpdateId("A", 2),
        stamp=LamportStamp(2, "A"),
        epoch=0,
        object_id="c",
        object_type=ObjectType.COUNTER,
        op=CounterAdd(1),
    )
    good = wire.encode_sync(wire.SyncMessage("A", 0, [], [u1, u2]))
    assert len(wire.decode_sync(good).updates) == 2
    # splice the two encoded updates in the wrong order
    bad = good[: good.index(wire.encode_update(u1))] + wire.encode_update(
        u2
    ) + wire.encode_update(u1)
    with pytest.raises(DecodeError):
        wire.decode_sync(bad)


def test_sync_rejects_duplicate_ids():
    u1 = make_update()
    raw = wire.encode_sync(wire.SyncMessage("A", 0, [], [u1]))
    # count says 2, body carries the same update twice
    doubled = raw[: -len(wire.encode_update(u1)) - 4]
    doubled += (2).to_bytes(4, "big") + wire.encode_update(u1) * 2
    with pytest.raises(DecodeError):
        wire.decode_sync(doubled)


@settings(max_examples=100, deadline=None)
@given(st.lists(updates(), max_size=6))
def test_sync_round_trip_random(pool):
    unique = {u.id: u for u in pool}
    msg = wire.SyncMessage("S", 1, [("S", 9)], list(unique.values()))
    encoded = wire.encode_sync(msg)
    decoded = wire.decode_sync(encoded)
    assert wire.encode_sync(decoded) == encoded
    sender, epoch, vv, spans = wire.scan_sync_payload(encoded)
    assert (sender, epoch, vv) == ("S", 1, [("S", 9)])
    assert len(spans) == len(unique)


def test_canonical_empty_store():
    from polyrdl.state import ObjectStore

    assert wire.canonical_state_encode(ObjectStore()) == b"\x00\x00\x00\x00"


def test_canonical_state_decode_round_trip():
    from polyrdl.replica import Replica
    from polyrdl.model import MapCounterAdd, SetAdd, SetRemove

    r = Replica("A")
    r.local_update("m", ObjectType.MAP, MapPut("k2", "v"))
    r.local_update("m", ObjectType.MAP, MapCounterAdd("k1", 4))
    r.local_update("s", ObjectType.SET, SetAdd(b"x"))
    r.local_update("s", ObjectType.SET, SetRemove(b"x", (UpdateId("A", 3),)))
    r.local_update("c", ObjectType.COUNTER, CounterAdd(-1))
    body = wire.canonical_state_encode(r.store)
    assert wire.canonical_state_encode(wire.canonical_state_decode(body)) == body


def test_golden_vectors_round_trip():
    cdf_dir = os.path.join(TESTDATA, "cdf")
    names = sorted(os.listdir(cdf_dir))
    assert len(names) >= 30
    for name in names:
        with open(os.path.join(cdf_dir, name)) as f:
            raw = bytes.fromhex(f.read().strip())
        msg_type, payload, end = wire.decode_frame(raw)
        assert end == len(raw), name
        if msg_type == wire.MSG_SYNC:
            again = wire.encode_sync(wire.decode_sync(payload))
        elif msg_type == wire.MSG_PLUGIN_HELLO:
            again = wire.encode_hello(wire.decode_hello(payload))
        elif msg_type == wire.MSG_PLUGIN_EVENT:
            again = wire.encode_event(wire.decode_event(payload))
        elif msg_type == wire.MSG_PLUGIN_CMD:
            again = wire.encode_command(wire.decode_command(payload))
        else:
            again = wire.encode_plugin_error(wire.decode_plugin_error(payload))
        assert wire.encode_frame(msg_type, again) == raw, name


def test_decode_fuzz_sample_never_crashes():
    rng = random.Random(99)
    for _ in range(3000):
        blob = rng.randbytes(rng.randint(0, 80))
        try:
            wire.decode_update(blob)
        except DecodeError:
            pass
        try:
            wire.decode_sync(blob)
        except DecodeError:
            pass
        try:
            wire.decode_frame(blob)
        except FrameError:
            pass


def test_decode_error_kinds_are_distinct():
    encoded = wire.encode_update(make_update())
    with pytest.raises(DecodeError) as err:
        wire.decode_update(encoded[:-1])
    assert err.value.kind == "truncated"
    with pytest.raises(DecodeError) as err:
        wire.decode_update(encoded + b"\x00")
    assert err.value.kind == "trailing"
    bad_utf8 = bytearray(encoded)
    bad_utf8[4] = 0xFF  # replica_id byte
    with pytest.raises(DecodeError) as err:
        wire.decode_update(bytes(bad_utf8))
    assert err.value.kind == "utf8"
    bad_kind = bytearray(encoded)
    bad_kind[-9] = 0x77  # op kind byte
    with pytest.raises(DecodeError) as err:
        wire.decode_update(bytes(bad_kind))
    assert err.value.kind == "unknown-tag"
    put = Update(
        id=UpdateId("A", 1),
        stamp=LamportStamp(1, "A"),
        epoch=0,
        object_id="m",
        object_type=ObjectType.MAP,
        op=MapPut("k", 1.5),
    )
    bad_float = bytearray(wire.encode_update(put))
    import struct

    bad_float[-8:] = struct.pack(">d", math.inf)
    with pytest.raises(DecodeError) as err:
        wire.decode_update(bytes(bad_float))
    assert err.value.kind == "nonfinite"


def test_frame_buffer_reassembly():
    frames = [wire.encode_frame(0x01, bytes([i]) * i) for i in range(6)]
    stream = b"".join(frames)
    buf = wire.FrameBuffer()
    out = []
    for i in range(0, len(stream), 3):
        buf.feed(stream[i : i + 3])
        while True:
            got = buf.next_frame()
            if got is None:
                break
            out.append(got)
    assert [p for _, p in out] == [bytes([i]) * i for i in range(6)]
