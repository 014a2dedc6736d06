"""Exhaustive small-instance oracle equivalence.

Enumerates scripts of concurrent ops on two origin replicas (with
optional sync points so removes can observe the other origin's adds),
collects each script's originated update set, dedupes identical sets,
and replays EVERY permutation of every set through a fresh replica,
asserting byte-equal digests against the independent oracle fold.
"""

from __future__ import annotations

import itertools
from multiprocessing import get_context
from typing import Dict, Iterable, List, Tuple

from .model import (
    CounterAdd,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    ObjectType,
    SetAdd,
    SetRemove,
    Update,
)
from .oracle import oracle_digest
from .replica import Replica
from . import wire

SYNC = "sync"

# Per-slot action menus: (label, callable(origin replica) -> None) or SYNC.
# Scripts assign each slot an (origin, action) pair.


def _counter_actions():
    return [
        ("add1", lambda r: r.local_update("c", ObjectType.COUNTER, CounterAdd(1))),
        ("sub2", lambda r: r.local_update("c", ObjectType.COUNTER, CounterAdd(-2))),
    ]


def _set_actions(alphabet=(b"x", b"y")):
    actions = []
    for element in alphabet:
        actions.append(
            (
                f"add_{element.decode()}",
                lambda r, e=element: r.local_update("s", ObjectType.SET, SetAdd(e)),
            )
        )
        actions.append(
            (
                f"rm_{element.decode()}",
                lambda r, e=element: r.local_update(
                    "s",
                    ObjectType.SET,
                    SetRemove(e, _observed_set_tags(r, "s", e)),
                ),
            )
        )
    return actions


def _observed_set_tags(replica: Replica, object_id: str, element: bytes):
    state = replica.store.get(object_id, ObjectType.SET)
    if state is None:
        return ()
    return tuple(state.live.get(element, {}))


def _observed_map_tags(replica: Replica, object_id: str, key: str, element: bytes):
    state = replica.store.get(object_id, ObjectType.MAP)
    if state is None or key not in state.entries:
        return ()
    entry = state.entries[key]
    return tuple(tag for tag, (el, _) in entry.adds.items() if el == element)


def _map_actions(keys=("k1", "k2")):
    k1 = keys[0]
    actions = [
        ("put1", lambda r: r.local_update("m", ObjectType.MAP, MapPut(k1, 1))),
        ("rmk1", lambda r: r.local_update("m", ObjectType.MAP, MapRemoveKey(k1))),
        ("ctr1", lambda r: r.local_update("m", ObjectType.MAP, MapCounterAdd(k1, 1))),
        (
            "sadd1",
            lambda r: r.local_update("m", ObjectType.MAP, MapSetAdd(k1, b"x")),
        ),
        (
            "srm1",
            lambda r: r.local_update(
                "m", ObjectType.MAP, MapSetRemove(k1, b"x", _observed_map_tags(r, "m", k1, b"x"))
            ),
        ),
    ]
    if len(keys) > 1:
        k2 = keys[1]
        actions.append(("put2", lambda r: r.local_update("m", ObjectType.MAP, MapPut(k2, 2))))
        actions.append(("rmk2", lambda r: r.local_update("m", ObjectType.MAP, MapRemoveKey(k2))))
    return actions


def _run_script(actions, script) -> Tuple[Update, ...]:
    """Execute one script on a fresh two-origin fleet; -> originated set."""
    replicas = (Replica("A"), Replica("B"))
    originated: List[Update] = []
    seen: List[List[Update]] = [[], []]  # per-origin originated updates
    for origin, action in script:
        replica = replicas[origin]
        if action == SYNC:
            for u in seen[1 - origin]:
                replica.apply_update(u)
            continue
        before = len(replica.log)
        action[1](replica)
        for u in replica.log[before:]:
            if u.id.replica_id == replica.replica_id:
                originated.append(u)
                seen[origin].append(u)
    return tuple(originated)


def generate_update_sets(data_type: str, max_len: int, with_sync: bool = True,
                         action_subset=None) -> Dict[bytes, Tuple[Update, ...]]:
    """All distinct update sets from scripts of length <= max_len."""
    if data_type == "counter":
        actions = _counter_actions()
    elif data_type == "set":
        actions = _set_actions()
    else:
        actions = _map_actions()
    if action_subset is not None:
        actions = [a for a in actions if a[0] in action_subset]
    slots = [(origin, action) for origin in (0, 1) for action in actions]
    if with_sync:
        slots += [(0, SYNC), (1, SYNC)]
    sets: Dict[bytes, Tuple[Update, ...]] = {}
    for length in range(1, max_len + 1):
        for script in itertools.product(slots, repeat=length):
            updates = _run_script(actions, script)
            if not updates:
                continue
            signature = b"\x00".join(sorted(wire.encode_update(u) for u in updates))
            if signature not in sets:
                sets[signature] = updates
    return sets


def check_all_permutations(updates: Tuple[Update, ...]) -> int:
    """Replay every delivery order; -> number of permutations checked."""
    want = oracle_digest(updates)
    checked = 0
    for perm in itertools.permutations(updates):
        replica = Replica("probe")
        for u in perm:
            replica.apply_update(u)
        got = replica.state_digest()
        if got != want:
            order = [f"{u.id.replica_id}:{u.id.seq}" for u in perm]
            raise AssertionError(
                f"permutation diverged from oracle: order={order} "
                f"got={got.hex()} want={want.hex()}"
            )
        checked += 1
    return checked


def _check_batch(encoded_sets: List[List[bytes]]) -> Tuple[int, int]:
    sets_checked = perms_checked = 0
    for encoded in encoded_sets:
        updates = tuple(wire.decode_update(raw) for raw in encoded)
        perms_checked += check_all_permutations(updates)
        sets_checked += 1
    return sets_checked, perms_checked


def run_exhaustive(
    plan: Iterable[Tuple[str, int, bool, object]] = (
        ("counter", 5, False, None),
        ("set", 4, True, None),
        ("set", 5, True, ("add_x", "rm_x")),
        ("map", 4, True, None),
        ("map", 5, True, ("put1", "rmk1", "ctr1")),
    ),
    processes: int = 2,
) -> Tuple[int, int]:
    """Run the full plan; -> (distinct sets checked, permutations replayed)."""
    all_sets: Dict[bytes, Tuple[Update, ...]] = {}
    for data_type, max_len, with_sync, subset in plan:
        all_sets.update(generate_update_sets(data_type, max_len, with_sync, subset))
    encoded = [
        [wire.encode_update(u) for u in updates] for updates in all_sets.values()
    ]
    # Big sets (120 permutations each) dominate; spread them round-robin.
    encoded.sort(key=len, reverse=True)
    batches = [encoded[i::processes] for i in range(processes)]
    if processes <= 1:
        results = [_check_batch(batch) for batch in batches]
    else:
        with get_context("fork").Pool(processes) as pool:
            results = pool.map(_check_batch, batches)
    return sum(r[0] for r in results), sum(r[1] for r in results)
