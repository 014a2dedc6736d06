"""Undo plug-in: compensates applied updates with new inverse updates.

History is immutable in an op-based replicated log, so undo never
deletes; it issues compensating updates that propagate like any other.
The plug-in mirrors the host replica from its event stream and records a
pre-image for the ops whose inverse needs one (map puts and key removes).

Compensation per kind:
  CounterAdd(d)            -> CounterAdd(-d)
  SetAdd(e)                -> SetRemove(e, observed=[target id])   (surgical)
  SetRemove(e, tags)       -> SetAdd(e) with a fresh tag
  MapPut(k, v)             -> MapPut(k, prior value) | MapRemoveKey(k) if the
                              key was absent | a zero-effect op of the prior
                              type (counter +0 / empty set-remove) if the key
                              previously held a counter or set, which re-wins
                              the type conflict and resurfaces its records
  MapRemoveKey(k)          -> re-create the prior resolved content with
                              fresh stamps (put / counter add / set adds)
  MapCounterAdd(k, d)      -> MapCounterAdd(k, -d)
  MapSetAdd(k, e)          -> MapSetRemove(k, e, observed=[target id])
  MapSetRemove(k, e, tags) -> MapSetAdd(k, e)
  Reset                    -> refused (UNSUPPORTED)
"""

from __future__ import annotations

import argparse
import sys
import threading
from typing import Dict, List, Optional, Tuple

from ..errors import PluginError
from ..model import (
    CounterAdd,
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
)
from ..replica import Replica
from ..state import ENTRY_COUNTER, ENTRY_NONE, ENTRY_REGISTER
from .. import wire
from .base import PluginPeer

UNKNOWN_UPDATE = "UNKNOWN_UPDATE"
IDEMPOTENT_NOOP = "IDEMPOTENT_NOOP"
UNSUPPORTED = "UNSUPPORTED"


class UndoError(PluginError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


def resolved_key_view(replica: Replica, object_id: str, key: str):
    """('absent',) | ('register', scalar) | ('counter', int) | ('set', elems)"""
    state = replica.store.get(object_id, ObjectType.MAP)
    if state is None or key not in state.entries:
        return ("absent",)
    kind, payload = state.entries[key].resolve()
    if kind == ENTRY_NONE:
        return ("absent",)
    if kind == ENTRY_REGISTER:
        return ("register", payload[0])
    if kind == ENTRY_COUNTER:
        return ("counter", sum(d for d, _ in payload.values()))
    adds, _ = payload
    return ("set", sorted({el for el, _ in adds.values()}))


class UndoPlugin(PluginPeer):
    def __init__(self, plugin_id: str, listen_port: int):
        super().__init__(plugin_id, listen_port)
        self.mirror = Replica("__undo_mirror__")
        # UpdateId -> (Update, pre-image or None)
        self.shadow: Dict[UpdateId, Tuple[Update, Optional[tuple]]] = {}
        self.compensated: set = set()
        self._mirror_lock = threading.Lock()

    def on_event(self, event: wire.PluginEvent) -> None:
        if event.core_function not in ("update", "merge") or event.update is None:
            return
        u = event.update
        with self._mirror_lock:
            if u.id in self.shadow:
                return
            pre_image = None
            if isinstance(u.op, (MapPut, MapRemoveKey)):
                pre_image = resolved_key_view(self.mirror, u.object_id, u.op.key)
            self.mirror.apply_update(u)
            self.shadow[u.id] = (u, pre_image)

    # -- compensation -------------------------------------------------------

    def compensations(self, target: UpdateId) -> List[Tuple[str, ObjectType, object]]:
        with self._mirror_lock:
            if target not in self.shadow:
                raise UndoError(UNKNOWN_UPDATE, f"{target.replica_id}:{target.seq}")
            if target in self.compensated:
                raise UndoError(IDEMPOTENT_NOOP, "target already compensated")
            u, pre_image = self.shadow[target]
        op = u.op
        oid = u.object_id
        if isinstance(op, CounterAdd):
            return [(oid, ObjectType.COUNTER, CounterAdd(-op.delta))]
        if isinstance(op, SetAdd):
            return [(oid, ObjectType.SET, SetRemove(op.element, (target,)))]
        if isinstance(op, SetRemove):
            return [(oid, ObjectType.SET, SetAdd(op.element))]
        if isinstance(op, MapCounterAdd):
            return [(oid, ObjectType.MAP, MapCounterAdd(op.key, -op.delta))]
        if isinstance(op, MapSetAdd):
            return [(oid, ObjectType.MAP, MapSetRemove(op.key, op.element, (target,)))]
        if isinstance(op, MapSetRemove):
            return [(oid, ObjectType.MAP, MapSetAdd(op.key, op.element))]
        if isinstance(op, MapPut):
            kind = pre_image[0]
            if kind == "absent":
                return [(oid, ObjectType.MAP, MapRemoveKey(op.key))]
            if kind == "register":
                return [(oid, ObjectType.MAP, MapPut(op.key, pre_image[1]))]
            if kind == "counter":
                # Zero-delta add re-establishes the counter as type winner;
                # its retained contributions resurface unchanged.
                return [(oid, ObjectType.MAP, MapCounterAdd(op.key, 0))]
            return [(oid, ObjectType.MAP, MapSetRemove(op.key, b"", ()))]
        if isinstance(op, MapRemoveKey):
            kind = pre_image[0]
            if kind == "absent":
                return []
            if kind == "register":
                return [(oid, ObjectType.MAP, MapPut(op.key, pre_image[1]))]
            if kind == "counter":
                return [(oid, ObjectType.MAP, MapCounterAdd(op.key, pre_image[1]))]
            return [(oid, ObjectType.MAP, MapSetAdd(op.key, el)) for el in pre_image[1]]
        raise UndoError(UNSUPPORTED, f"cannot undo {type(op).__name__}")

    def undo(self, target: UpdateId) -> List[Update]:
        """Issue compensating updates for one applied update."""
        plan = self.compensations(target)
        issued: List[Update] = []
        for object_id, object_type, op in plan:
            reply = self.command_update(object_id, int(object_type), op)
            issued.append(wire.decode_update(reply.result_view))
        self.compensated.add(target)
        return issued


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="undo plug-in")
    parser.add_argument("--id", required=True)
    parser.add_argument("--listen", required=True, type=int)
    args = parser.parse_args(argv)
    plugin = UndoPlugin(args.id, args.listen)
    plugin.start()
    # Trigger channel: stdin lines of the form "undo <replica_id> <seq>".
    try:
        for line in sys.stdin:
            fields = line.split()
            if len(fields) == 3 and fields[0] == "undo":
                try:
                    issued = plugin.undo(UpdateId(fields[1], int(fields[2])))
                    print(f"undo ok: {len(issued)} compensations", flush=True)
                except (UndoError, PluginError) as exc:
                    print(f"undo failed: {exc}", flush=True)
    except KeyboardInterrupt:
        pass
    plugin.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
