"""Core semantics: the five data-type rules, clocks, epochs, digests."""

import itertools

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from polyrdl.errors import InvalidOperation
from polyrdl.model import (
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    ObjectType,
    Reset,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
    VersionVector,
)
from polyrdl.oracle import oracle_digest
from polyrdl.replica import ApplyResult, Replica
from polyrdl import wire

from conftest import build_honest_pool, script_steps


def u(rid, seq, lamport, object_id, object_type, op, epoch=0):
    return Update(
        id=UpdateId(rid, seq),
        stamp=LamportStamp(lamport, rid),
        epoch=epoch,
        object_id=object_id,
        object_type=object_type,
        op=op,
    )


# -- new_replica ------------------------------------------------------------

def test_fresh_replica_state():
    r = Replica("A")
    assert (r.clock, r.epoch, r.next_seq) == (0, 0, 1)
    assert r.access("anything").kind == "absent"


def test_empty_replica_id_rejected():
    with pytest.raises(InvalidOperation):
        Replica("")


def test_oversize_replica_id_rejected():
    with pytest.raises(InvalidOperation):
        Replica("x" * 65)


# -- access -----------------------------------------------------------------

def test_counter_access_empty_and_sum():
    r = Replica("A")
    assert r.access("likes", ObjectType.COUNTER).value == 0
    r.local_update("likes", ObjectType.COUNTER, CounterAdd(5))
    r.local_update("likes", ObjectType.COUNTER, CounterAdd(-2))
    assert r.access("likes", ObjectType.COUNTER).value == 3


def test_set_single_copy_for_concurrent_adds():
    a, b = Replica("A"), Replica("B")
    ua = a.local_update("registry", ObjectType.SET, SetAdd(b"vase"))
    ub = b.local_update("registry", ObjectType.SET, SetAdd(b"vase"))
    a.apply_update(ub)
    b.apply_update(ua)
    assert a.access("registry").value == [b"vase"]
    assert b.access("registry").value == [b"vase"]
    assert a.state_digest() == b.state_digest()


def test_access_is_read_only_for_digests():
    r = Replica("A")
    before = r.state_digest()
    r.access("ghost", ObjectType.MAP)
    r.access("ghost2")
    assert r.state_digest() == before
    assert r.clock == 0


# -- local_update -----------------------------------------------------------

def test_map_counter_nested_quantity():
    r = Replica("A")
    r.local_update("cart", ObjectType.MAP, MapCounterAdd("sku-7", 2))
    assert r.access("cart").value == [("sku-7", ("counter", 2))]


def test_remove_with_no_observed_tags_is_noop_on_state():
    r = Replica("A")
    before = r.state_digest()
    r.local_update("s", ObjectType.SET, SetRemove(b"x", ()))
    assert r.access("s").value == []
    assert r.state_digest() != before  # the remove itself is recorded


def test_kind_type_mismatch_rejected_without_tick():
    r = Replica("A")
    with pytest.raises(InvalidOperation):
        r.local_update("c", ObjectType.SET, CounterAdd(1))
    assert r.clock == 0 and r.next_seq == 1 and not r.log


def test_application_reset_refused():
    r = Replica("A")
    with pytest.raises(InvalidOperation):
        r.local_update("", ObjectType.STORE, Reset(1, b"\x00\x00\x00\x00"))


# -- apply_update -----------------------------------------------------------

def test_duplicate_apply_is_idempotent():
    a, b = Replica("A"), Replica("B")
    x = a.local_update("c", ObjectType.COUNTER, CounterAdd(7))
    assert b.apply_update(x) == ApplyResult.APPLIED
    digest = b.state_digest()
    assert b.apply_update(x) == ApplyResult.DUPLICATE
    assert b.state_digest() == digest


def test_add_wins_both_delivery_orders():
    add = u("A", 1, 1, "s", ObjectType.SET, SetAdd(b"x"))
    rm = u("B", 1, 1, "s", ObjectType.SET, SetRemove(b"x", ()))
    for order in ([add, rm], [rm, add]):
        r = Replica("Z")
        for x in order:
            r.apply_update(x)
        assert r.access("s").value == [b"x"]
    assert oracle_digest([add, rm]) == r.state_digest()


def test_map_tombstone_triple_all_orders():
    ops = [
        u("A", 5, 5, "m", ObjectType.MAP, MapPut("k", 1)),
        u("B", 1, 7, "m", ObjectType.MAP, MapRemoveKey("k")),
        u("A", 6, 9, "m", ObjectType.MAP, MapCounterAdd("k", 3)),
    ]
    want = oracle_digest(ops)
    for perm in itertools.permutations(ops):
        r = Replica("Z")
        for x in perm:
            r.apply_update(x)
        assert r.state_digest() == want
        assert r.access("m").value == [("k", ("counter", 3))]


def test_surgical_remove_leaves_other_tags():
    a, b = Replica("A"), Replica("B")
    ua = a.local_update("s", ObjectType.SET, SetAdd(b"x"))
    ub = b.local_update("s", ObjectType.SET, SetAdd(b"x"))
    rm = u("C", 1, 9, "s", ObjectType.SET, SetRemove(b"x", (ua.id,)))
    for x in (ua, ub, rm):
        a.apply_update(x)
    assert a.access("s").value == [b"x"]  # b's tag survives


def test_clock_monotone_and_receive_rule():
    r = Replica("A")
    r.apply_update(u("B", 1, 41, "c", ObjectType.COUNTER, CounterAdd(1)))
    assert r.clock == 41
    r.apply_update(u("C", 1, 5, "c", ObjectType.COUNTER, CounterAdd(1)))
    assert r.clock == 41  # max-merge, no tick on receive
    nxt = r.local_update("c", ObjectType.COUNTER, CounterAdd(1))
    assert nxt.stamp.lamport == 42


# -- epochs / Reset -----------------------------------------------------------

def snapshot_of(*deltas):
    src = Replica("S")
    for d in deltas:
        src.local_update("c", ObjectType.COUNTER, CounterAdd(d))
    return wire.canonical_state_encode(src.store), src


def test_reset_replaces_store_and_gates_stale():
    body, _ = snapshot_of(10)
    r = Replica("A")
    r.local_update("c", ObjectType.COUNTER, CounterAdd(999))
    old = u("B", 1, 1, "c", ObjectType.COUNTER, CounterAdd(5), epoch=0)
    reset = u("S", 2, 50, "", ObjectType.STORE, Reset(1, body), epoch=1)
    assert r.apply_update(reset) == ApplyResult.APPLIED
    assert r.epoch == 1
    assert r.access("c", ObjectType.COUNTER).value == 10
    assert r.apply_update(old) == ApplyResult.STALE_EPOCH
    assert r.access("c", ObjectType.COUNTER).value == 10


def test_batch_reevaluated_under_new_epoch():
    # [u(epoch 0), Reset(epoch 1), u'(epoch 0)] in one merge batch
    from polyrdl.node import ReplicaNode

    body, _ = snapshot_of(10)
    node = ReplicaNode(Replica("Z"))
    batch = [
        u("A", 1, 1, "c", ObjectType.COUNTER, CounterAdd(1), epoch=0),
        u("S", 1, 30, "", ObjectType.STORE, Reset(1, body), epoch=1),
        u("B", 1, 2, "c", ObjectType.COUNTER, CounterAdd(2), epoch=0),
    ]
    report = node.handle_sync(wire.SyncMessage("A", 0, [], batch))
    assert (report.applied, report.stale) == (2, 1)
    assert node.replica.access("c", ObjectType.COUNTER).value == 10


def test_concurrent_resets_greater_stamp_wins_any_order():
    body_a, _ = snapshot_of(100)
    body_b, _ = snapshot_of(200)
    ra = u("A", 1, 10, "", ObjectType.STORE, Reset(1, body_a), epoch=1)
    rb = u("B", 1, 20, "", ObjectType.STORE, Reset(1, body_b), epoch=1)
    post = u("C", 1, 30, "c", ObjectType.COUNTER, CounterAdd(1), epoch=1)
    want = oracle_digest([ra, rb, post])
    for perm in itertools.permutations([ra, rb, post]):
        r = Replica("Z")
        for x in perm:
            r.apply_update(x)
        assert r.state_digest() == want
        assert r.access("c", ObjectType.COUNTER).value == 201


def test_epoch_never_decreases():
    body, _ = snapshot_of(1)
    r = Replica("A")
    r.apply_update(u("S", 1, 5, "", ObjectType.STORE, Reset(3, body), epoch=3))
    assert r.epoch == 3
    stale_reset = u("T", 1, 9, "", ObjectType.STORE, Reset(2, body), epoch=2)
    assert r.apply_update(stale_reset) == ApplyResult.STALE_EPOCH
    assert r.epoch == 3


# -- properties ---------------------------------------------------------------

@settings(max_examples=150, deadline=None)
@given(script_steps, st.randoms(use_true_random=False))
def test_confluence_any_delivery_order(steps, rnd):
    pool = build_honest_pool(steps)
    want = oracle_digest(pool)
    for _ in range(3):
        order = list(pool)
        rnd.shuffle(order)
        r = Replica("probe")
        for x in order:
            r.apply_update(x)
        assert r.state_digest() == want


@settings(max_examples=100, deadline=None)
@given(script_steps)
def test_idempotence_double_apply(steps):
    pool = build_honest_pool(steps)
    r = Replica("probe")
    for x in pool:
        r.apply_update(x)
    digest = r.state_digest()
    for x in pool:
        assert r.apply_update(x) == ApplyResult.DUPLICATE
    assert r.state_digest() == digest


@settings(max_examples=100, deadline=None)
@given(script_steps)
def test_pairwise_commutativity(steps):
    pool = build_honest_pool(steps)
    if len(pool) < 2:
        return
    a, b = pool[-2], pool[-1]
    base = pool[:-2]
    r1, r2 = Replica("p1"), Replica("p2")
    for x in base:
        r1.apply_update(x)
        r2.apply_update(x)
    r1.apply_update(a), r1.apply_update(b)
    r2.apply_update(b), r2.apply_update(a)
    assert r1.state_digest() == r2.state_digest()


@settings(max_examples=100, deadline=None)
@given(script_steps)
def test_counter_value_matches_recount(steps):
    pool = build_honest_pool(steps)
    r = Replica("probe")
    for x in pool:
        r.apply_update(x)
    state = r.store.get("c0", ObjectType.COUNTER)
    if state is not None:
        assert state.value() == state.recount()


@settings(max_examples=100, deadline=None)
@given(script_steps)
def test_clock_bounds_applied_stamps(steps):
    pool = build_honest_pool(steps)
    r = Replica("probe")
    for x in pool:
        r.apply_update(x)
        assert r.clock >= x.stamp.lamport


# -- version vector ------------------------------------------------------------

def test_version_vector_contiguity_and_ooo():
    vv = VersionVector()
    vv.record(UpdateId("A", 1))
    vv.record(UpdateId("A", 3))
    assert vv.max_seq("A") == 1
    assert vv.contains(UpdateId("A", 3))
    assert not vv.contains(UpdateId("A", 2))
    vv.record(UpdateId("A", 2))
    assert vv.max_seq("A") == 3
    assert not vv.pending


def test_log_and_applied_agree():
    a, b = Replica("A"), Replica("B")
    for i in range(5):
        b.apply_update(a.local_update("c", ObjectType.COUNTER, CounterAdd(i)))
    for r in (a, b):
        assert sorted(x.id.seq for x in r.log) == [1, 2, 3, 4, 5]
        assert all(r.applied.contains(x.id) for x in r.log)
