#!/usr/bin/env python3
"""Regenerate the golden wire vectors under testdata/.

Frames land in testdata/cdf/*.hex (one frame per file, lowercase hex);
digest cases in testdata/digests/*.json.  Output is fully deterministic;
run from the repository root after any intentional wire change and
commit the results.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from polyrdl import wire  # noqa: E402
from polyrdl.model import (  # noqa: E402
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    ObjectType,
    Reset,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
    ValueView,
)
from polyrdl.replica import Replica  # noqa: E402

ROOT = os.path.join(os.path.dirname(__file__), "..")
CDF_DIR = os.path.join(ROOT, "testdata", "cdf")
DIGEST_DIR = os.path.join(ROOT, "testdata", "digests")


def u(rid, seq, lamport, object_id, object_type, op, epoch=0):
    return Update(
        id=UpdateId(rid, seq),
        stamp=LamportStamp(lamport, rid),
        epoch=epoch,
        object_id=object_id,
        object_type=object_type,
        op=op,
    )


def sync_frame(sender, epoch, vv, updates):
    msg = wire.SyncMessage(sender, epoch, vv, updates)
    return wire.encode_frame(wire.MSG_SYNC, wire.encode_sync(msg))


def build_frames():
    frames = {}

    def add(name, frame):
        frames[f"{len(frames):03d}_{name}"] = frame

    tag_a1 = UpdateId("A", 1)
    tag_b7 = UpdateId("B", 7)

    # Sync frames covering every op kind and scalar tag.
    add("sync_empty", sync_frame("A", 0, [], []))
    add(
        "sync_counter_adds",
        sync_frame(
            "A",
            0,
            [("A", 2)],
            [
                u("A", 1, 1, "likes", ObjectType.COUNTER, CounterAdd(5)),
                u("A", 2, 2, "likes", ObjectType.COUNTER, CounterAdd(-2)),
            ],
        ),
    )
    add(
        "sync_counter_extremes",
        sync_frame(
            "C",
            0,
            [("C", 2)],
            [
                u("C", 1, 1, "c", ObjectType.COUNTER, CounterAdd(2**63 - 1)),
                u("C", 2, 2, "c", ObjectType.COUNTER, CounterAdd(-(2**63))),
            ],
        ),
    )
    add(
        "sync_set_add",
        sync_frame("A", 0, [("A", 3)], [u("A", 3, 5, "registry", ObjectType.SET, SetAdd(b"vase"))]),
    )
    add(
        "sync_set_add_empty_element",
        sync_frame("A", 0, [("A", 9)], [u("A", 9, 9, "s", ObjectType.SET, SetAdd(b""))]),
    )
    add(
        "sync_set_remove_observed",
        sync_frame(
            "B",
            0,
            [("B", 4)],
            [u("B", 4, 6, "registry", ObjectType.SET, SetRemove(b"vase", (tag_a1, tag_b7)))],
        ),
    )
    add(
        "sync_set_remove_blind",
        sync_frame("B", 0, [("B", 5)], [u("B", 5, 7, "registry", ObjectType.SET, SetRemove(b"x", ()))]),
    )
    add(
        "sync_map_put_int",
        sync_frame("A", 0, [("A", 4)], [u("A", 4, 8, "cart", ObjectType.MAP, MapPut("sku-1", 3))]),
    )
    add(
        "sync_map_put_float",
        sync_frame("A", 0, [("A", 5)], [u("A", 5, 9, "cart", ObjectType.MAP, MapPut("price", 19.75))]),
    )
    add(
        "sync_map_put_bool",
        sync_frame("A", 0, [("A", 6)], [u("A", 6, 10, "cart", ObjectType.MAP, MapPut("done", True))]),
    )
    add(
        "sync_map_put_bool_false",
        sync_frame("A", 0, [("A", 7)], [u("A", 7, 11, "cart", ObjectType.MAP, MapPut("sent", False))]),
    )
    add(
        "sync_map_put_str",
        sync_frame("B", 0, [("B", 6)], [u("B", 6, 12, "cart", ObjectType.MAP, MapPut("note", "价格 ok"))]),
    )
    add(
        "sync_map_put_bytes",
        sync_frame("B", 0, [("B", 8)], [u("B", 8, 13, "cart", ObjectType.MAP, MapPut("blob", b"\x00\xff\x10"))]),
    )
    add(
        "sync_map_remove_key",
        sync_frame("A", 0, [("A", 8)], [u("A", 8, 14, "cart", ObjectType.MAP, MapRemoveKey("sku-1"))]),
    )
    add(
        "sync_map_counter_add",
        sync_frame("A", 0, [("A", 10)], [u("A", 10, 15, "cart", ObjectType.MAP, MapCounterAdd("sku-7", 2))]),
    )
    add(
        "sync_map_set_add",
        sync_frame("B", 0, [("B", 9)], [u("B", 9, 16, "cart", ObjectType.MAP, MapSetAdd("tags", b"sale"))]),
    )
    add(
        "sync_map_set_remove",
        sync_frame(
            "B",
            0,
            [("B", 10)],
            [u("B", 10, 17, "cart", ObjectType.MAP, MapSetRemove("tags", b"sale", (tag_b7,)))],
        ),
    )

    snapshot_replica = Replica("S")
    snapshot_replica.local_update("likes", ObjectType.COUNTER, CounterAdd(10))
    snapshot_replica.local_update("registry", ObjectType.SET, SetAdd(b"vase"))
    snapshot_replica.local_update("cart", ObjectType.MAP, MapPut("sku-1", 3))
    snapshot_body = wire.canonical_state_encode(snapshot_replica.store)
    add(
        "sync_reset",
        sync_frame(
            "S",
            1,
            [("S", 4)],
            [u("S", 4, 4, "", ObjectType.STORE, Reset(1, snapshot_body), epoch=1)],
        ),
    )
    add(
        "sync_multi_origin_sorted",
        sync_frame(
            "A",
            0,
            [("A", 1), ("B", 1), ("C", 1)],
            [
                u("A", 1, 1, "c", ObjectType.COUNTER, CounterAdd(1)),
                u("B", 1, 1, "c", ObjectType.COUNTER, CounterAdd(2)),
                u("C", 1, 1, "c", ObjectType.COUNTER, CounterAdd(3)),
            ],
        ),
    )
    add(
        "sync_unicode_ids",
        sync_frame(
            "réplica-β",
            0,
            [("réplica-β", 1)],
            [u("réplica-β", 1, 1, "объект", ObjectType.COUNTER, CounterAdd(-7))],
        ),
    )
    add(
        "sync_big_numbers",
        sync_frame(
            "Z",
            12345678,
            [("Z", 2**63)],
            [
                u(
                    "Z",
                    2**63,
                    2**64 - 1,
                    "c",
                    ObjectType.COUNTER,
                    CounterAdd(0),
                    epoch=12345678,
                )
            ],
        ),
    )

    # Plug-in protocol frames.
    add(
        "plugin_hello",
        wire.encode_frame(wire.MSG_PLUGIN_HELLO, wire.encode_hello(wire.PluginHello("logging", 1))),
    )
    event_update = u("A", 11, 20, "likes", ObjectType.COUNTER, CounterAdd(4))
    add(
        "plugin_event_update",
        wire.encode_frame(
            wire.MSG_PLUGIN_EVENT,
            wire.encode_event(wire.PluginEvent(3, "update", "A", event_update, b"")),
        ),
    )
    add(
        "plugin_event_sync_stats",
        wire.encode_frame(
            wire.MSG_PLUGIN_EVENT,
            wire.encode_event(
                wire.PluginEvent(4, "sync", "A", None, wire.encode_sync_stats(11, 2))
            ),
        ),
    )
    add(
        "plugin_event_reply_marker",
        wire.encode_frame(
            wire.MSG_PLUGIN_EVENT,
            wire.encode_event(
                wire.PluginEvent(
                    0, "access", "A", None, wire.encode_value_view(ValueView("counter", 13))
                )
            ),
        ),
    )
    add(
        "plugin_cmd_access",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD,
            wire.encode_command(wire.PluginCommand(1, "access", wire.encode_access_args("likes", 1))),
        ),
    )
    add(
        "plugin_cmd_update",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD,
            wire.encode_command(
                wire.PluginCommand(
                    2, "update", wire.encode_update_args("likes", 1, CounterAdd(-5))
                )
            ),
        ),
    )
    add(
        "plugin_cmd_sync",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD, wire.encode_command(wire.PluginCommand(3, "sync", b""))
        ),
    )
    add(
        "plugin_cmd_merge",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD,
            wire.encode_command(
                wire.PluginCommand(
                    4,
                    "merge",
                    wire.encode_sync(wire.SyncMessage("P", 0, [], [])),
                )
            ),
        ),
    )
    add(
        "plugin_cmd_checkpoint",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD,
            wire.encode_command(wire.PluginCommand(5, "checkpoint", wire.encode_label_args("c1"))),
        ),
    )
    add(
        "plugin_cmd_restore",
        wire.encode_frame(
            wire.MSG_PLUGIN_CMD,
            wire.encode_command(wire.PluginCommand(6, "restore", wire.encode_label_args("c1"))),
        ),
    )
    add(
        "plugin_err_permission",
        wire.encode_frame(
            wire.MSG_PLUGIN_ERR,
            wire.encode_plugin_error(wire.PluginErrorMsg(6, 0x0001, "permission denied")),
        ),
    )
    add(
        "plugin_err_bad_args",
        wire.encode_frame(
            wire.MSG_PLUGIN_ERR,
            wire.encode_plugin_error(wire.PluginErrorMsg(7, 0x0002, "bad args")),
        ),
    )
    return frames


def build_digest_cases():
    cases = []

    def case(name, updates):
        replica = Replica("check")
        for upd in updates:
            replica.apply_update(upd)
        cases.append(
            {
                "name": name,
                "updates": [wire.encode_update(x).hex() for x in updates],
                "expected_digest": replica.state_digest().hex(),
            }
        )

    case("empty", [])
    case(
        "counter_sum",
        [
            u("A", 1, 1, "likes", ObjectType.COUNTER, CounterAdd(5)),
            u("B", 1, 1, "likes", ObjectType.COUNTER, CounterAdd(-2)),
            u("A", 2, 2, "other", ObjectType.COUNTER, CounterAdd(100)),
        ],
    )
    case(
        "set_add_wins",
        [
            u("A", 1, 1, "s", ObjectType.SET, SetAdd(b"x")),
            u("B", 1, 1, "s", ObjectType.SET, SetRemove(b"x", ())),
            u("B", 2, 2, "s", ObjectType.SET, SetAdd(b"y")),
            u("A", 2, 3, "s", ObjectType.SET, SetRemove(b"y", (UpdateId("B", 2),))),
        ],
    )
    case(
        "map_tombstone_type_conflict",
        [
            u("A", 1, 5, "m", ObjectType.MAP, MapPut("k", 1)),
            u("B", 1, 7, "m", ObjectType.MAP, MapRemoveKey("k")),
            u("A", 2, 9, "m", ObjectType.MAP, MapCounterAdd("k", 3)),
            u("B", 2, 8, "m", ObjectType.MAP, MapSetAdd("k2", b"e")),
        ],
    )
    reset_source = Replica("S")
    reset_source.local_update("likes", ObjectType.COUNTER, CounterAdd(10))
    body = wire.canonical_state_encode(reset_source.store)
    case(
        "reset_epoch",
        [
            u("A", 1, 1, "likes", ObjectType.COUNTER, CounterAdd(999)),
            u("S", 2, 5, "", ObjectType.STORE, Reset(1, body), epoch=1),
            u("A", 2, 6, "likes", ObjectType.COUNTER, CounterAdd(1), epoch=1),
        ],
    )
    case(
        "map_scalar_kinds",
        [
            u("A", 1, 1, "m", ObjectType.MAP, MapPut("i", -9)),
            u("A", 2, 2, "m", ObjectType.MAP, MapPut("f", 0.5)),
            u("A", 3, 3, "m", ObjectType.MAP, MapPut("b", True)),
            u("A", 4, 4, "m", ObjectType.MAP, MapPut("s", "text")),
            u("A", 5, 5, "m", ObjectType.MAP, MapPut("y", b"\x01\x02")),
        ],
    )
    return cases


def main() -> int:
    os.makedirs(CDF_DIR, exist_ok=True)
    os.makedirs(DIGEST_DIR, exist_ok=True)
    frames = build_frames()
    for name, frame in frames.items():
        with open(os.path.join(CDF_DIR, f"{name}.hex"), "w", encoding="ascii") as f:
            f.write(frame.hex() + "\n")
    cases = build_digest_cases()
    for i, item in enumerate(cases):
        path = os.path.join(DIGEST_DIR, f"{i:02d}_{item['name']}.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(item, f, indent=1, sort_keys=True)
    print(f"wrote {len(frames)} frames, {len(cases)} digest cases")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
