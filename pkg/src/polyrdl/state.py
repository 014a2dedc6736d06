"""In-memory object states for Counter, Set, and Map.

Every structure here is maintained so that the final state is a pure
function of the *set* of applied updates, never of their delivery order:

- Counter: a bag of uniquely-keyed signed contributions.
- Set: add-wins observed-remove.  ``removed`` is a grow-only kill set of
  add tags; an add whose tag is already killed lands dead, so removes
  arriving before their adds still converge without causal delivery.
- Map: each entry retains raw stamped records, pruned only by the
  per-key tombstone (which is monotone, hence order-independent).  The
  winning value type, LWW register, counter sum, and nested set are all
  resolved lazily from the retained records.  Losing-type records stay
  retained precisely so that a later type flip resurrects them exactly
  like the canonical-order fold would.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Set, Tuple

from .model import (
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    ObjectType,
    OpPayload,
    Scalar,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
)

StampKey = Tuple[int, bytes]


def stamp_key(stamp: LamportStamp) -> StampKey:
    return (stamp.lamport, stamp.replica_id.encode("utf-8"))


class CounterState:
    __slots__ = ("contributions", "_value")

    def __init__(self):
        # UpdateId -> (delta, lamport)
        self.contributions: Dict[UpdateId, Tuple[int, int]] = {}
        self._value = 0

    def add(self, uid: UpdateId, lamport: int, delta: int) -> None:
        self.contributions[uid] = (delta, lamport)
        self._value += delta

    def value(self) -> int:
        return self._value

    def recount(self) -> int:
        return sum(d for d, _ in self.contributions.values())


class SetState:
    __slots__ = ("live", "removed", "tag_index")

    def __init__(self):
        # element -> {tag UpdateId: lamport}
        self.live: Dict[bytes, Dict[UpdateId, int]] = {}
        self.removed: Set[UpdateId] = set()
        self.tag_index: Dict[UpdateId, bytes] = {}

    def add(self, tag: UpdateId, lamport: int, element: bytes) -> None:
        if tag in self.removed:
            return
        self.live.setdefault(element, {})[tag] = lamport
        self.tag_index[tag] = element

    def remove(self, observed: Tuple[UpdateId, ...]) -> None:
        for tag in observed:
            self.removed.add(tag)
            element = self.tag_index.pop(tag, None)
            if element is not None:
                tags = self.live[element]
                del tags[tag]
                if not tags:
                    del self.live[element]

    def elements(self) -> List[bytes]:
        return sorted(self.live.keys())

    def contains(self, element: bytes) -> bool:
        return element in self.live


# Resolved value kinds of a map entry.
ENTRY_NONE = 0
ENTRY_REGISTER = 1
ENTRY_COUNTER = 2
ENTRY_SET = 3

_KIND_BY_OP = {
    MapPut: ENTRY_REGISTER,
    MapCounterAdd: ENTRY_COUNTER,
    MapSetAdd: ENTRY_SET,
    MapSetRemove: ENTRY_SET,
}


class MapEntry:
    """Raw stamped records for one key, plus the key's tombstone."""

    __slots__ = ("tombstone", "put", "ctr", "adds", "removes", "removed_tags", "_resolved")

    def __init__(self):
        self.tombstone: Optional[StampKey] = None
        # winning register candidate: (scalar, stamp_key, lamport, replica_id)
        self.put: Optional[Tuple[Scalar, StampKey, int, str]] = None
        # UpdateId -> (delta, lamport)
        self.ctr: Dict[UpdateId, Tuple[int, int]] = {}
        # tag UpdateId -> (element, lamport); killed tags are dropped
        self.adds: Dict[UpdateId, Tuple[bytes, int]] = {}
        # retained remove records: (stamp_key, observed tuple)
        self.removes: List[Tuple[StampKey, Tuple[UpdateId, ...]]] = []
        self.removed_tags: Set[UpdateId] = set()
        self._resolved = None

    def _dead(self, key: StampKey) -> bool:
        return self.tombstone is not None and key <= self.tombstone

    def apply_put(self, key: StampKey, scalar: Scalar, lamport: int, rid: str) -> None:
        if self._dead(key):
            return
        # Only the greatest-stamped put can ever win or be encoded; older
        # puts influence nothing once a newer one is retained.
        if self.put is None or key > self.put[1]:
            self.put = (scalar, key, lamport, rid)
        self._resolved = None

    def apply_counter_add(self, uid: UpdateId, key: StampKey, delta: int) -> None:
        if self._dead(key):
            return
        self.ctr[uid] = (delta, key[0])
        self._resolved = None

    def apply_set_add(self, tag: UpdateId, key: StampKey, element: bytes) -> None:
        if self._dead(key):
            return
        if tag in self.removed_tags:
            return
        self.adds[tag] = (element, key[0])
        self._resolved = None

    def apply_set_remove(self, key: StampKey, observed: Tuple[UpdateId, ...]) -> None:
        if self._dead(key):
            return
        self.removes.append((key, observed))
        for tag in observed:
            self.removed_tags.add(tag)
            self.adds.pop(tag, None)
        self._resolved = None

    def apply_tombstone(self, key: StampKey) -> None:
        if self.tombstone is not None and key <= self.tombstone:
            return
        self.tombstone = key
        if self.put is not None and self.put[1] <= key:
            self.put = None
        self.ctr = {
            uid: rec
            for uid, rec in self.ctr.items()
            if (rec[1], uid.replica_id.encode("utf-8")) > key
        }
        self.adds = {
            tag: rec
            for tag, rec in self.adds.items()
            if (rec[1], tag.replica_id.encode("utf-8")) > key
        }
        survivors = [rec for rec in self.removes if rec[0] > key]
        if len(survivors) != len(self.removes):
            self.removes = survivors
            self.removed_tags = set()
            for _, observed in survivors:
                self.removed_tags.update(observed)
        self._resolved = None

    def resolve(self):
        """(kind, payload) for the winning type; cached until mutated.

        payload: register -> (scalar, lamport, replica_id);
        counter -> dict of contributions; set -> (adds dict, removed set).
        """
        if self._resolved is not None:
            return self._resolved
        best_kind = ENTRY_NONE
        best_key: Optional[StampKey] = None
        if self.put is not None:
            best_kind, best_key = ENTRY_REGISTER, self.put[1]
        for uid, (_, lamport) in self.ctr.items():
            key = (lamport, uid.replica_id.encode("utf-8"))
            if best_key is None or key > best_key:
                best_kind, best_key = ENTRY_COUNTER, key
        for tag, (_, lamport) in self.adds.items():
            key = (lamport, tag.replica_id.encode("utf-8"))
            if best_key is None or key > best_key:
                best_kind, best_key = ENTRY_SET, key
        for key, _ in self.removes:
            if best_key is None or key > best_key:
                best_kind, best_key = ENTRY_SET, key

        if best_kind == ENTRY_NONE:
            self._resolved = (ENTRY_NONE, None)
        elif best_kind == ENTRY_REGISTER:
            scalar, _, lamport, rid = self.put
            self._resolved = (ENTRY_REGISTER, (scalar, lamport, rid))
        elif best_kind == ENTRY_COUNTER:
            self._resolved = (ENTRY_COUNTER, self.ctr)
        else:
            self._resolved = (ENTRY_SET, (self.adds, self.removed_tags))
        return self._resolved

    def is_vacant(self) -> bool:
        return (
            self.tombstone is None
            and self.put is None
            and not self.ctr
            and not self.adds
            and not self.removes
        )


class MapState:
    __slots__ = ("entries",)

    def __init__(self):
        self.entries: Dict[str, MapEntry] = {}

    def entry(self, key: str) -> MapEntry:
        e = self.entries.get(key)
        if e is None:
            e = MapEntry()
            self.entries[key] = e
        return e


class ObjectStore:
    """object (id, type) -> state.  Types never collide; a same-id object
    of a different declared type lives in its own slot."""

    __slots__ = ("objects",)

    def __init__(self):
        self.objects: Dict[Tuple[str, int], object] = {}

    def counter(self, object_id: str) -> CounterState:
        slot = (object_id, int(ObjectType.COUNTER))
        st = self.objects.get(slot)
        if st is None:
            st = CounterState()
            self.objects[slot] = st
        return st

    def set_(self, object_id: str) -> SetState:
        slot = (object_id, int(ObjectType.SET))
        st = self.objects.get(slot)
        if st is None:
            st = SetState()
            self.objects[slot] = st
        return st

    def map_(self, object_id: str) -> MapState:
        slot = (object_id, int(ObjectType.MAP))
        st = self.objects.get(slot)
        if st is None:
            st = MapState()
            self.objects[slot] = st
        return st

    def get(self, object_id: str, object_type: ObjectType):
        return self.objects.get((object_id, int(object_type)))

    def apply_op(self, u: Update) -> None:
        """Fold one non-Reset update into the store (order-independent)."""
        op = u.op
        uid = u.id
        lam = u.stamp.lamport
        if isinstance(op, CounterAdd):
            self.counter(u.object_id).add(uid, lam, op.delta)
        elif isinstance(op, SetAdd):
            self.set_(u.object_id).add(uid, lam, op.element)
        elif isinstance(op, SetRemove):
            self.set_(u.object_id).remove(op.observed_tags)
        else:
            key = (lam, uid.replica_id.encode("utf-8"))
            entry = self.map_(u.object_id).entry(op.key)
            if isinstance(op, MapPut):
                entry.apply_put(key, op.value, lam, uid.replica_id)
            elif isinstance(op, MapRemoveKey):
                entry.apply_tombstone(key)
            elif isinstance(op, MapCounterAdd):
                entry.apply_counter_add(uid, key, op.delta)
            elif isinstance(op, MapSetAdd):
                entry.apply_set_add(uid, key, op.element)
            elif isinstance(op, MapSetRemove):
                entry.apply_set_remove(key, op.observed_tags)
            else:
                raise AssertionError(f"unhandled op {op!r}")
