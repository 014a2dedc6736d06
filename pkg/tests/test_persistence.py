"""WAL, snapshots, checkpoints, crash recovery."""

import os

import pytest

from polyrdl.errors import PersistenceError, WalCorruption
from polyrdl.model import CounterAdd, MapPut, ObjectType, SetAdd
from polyrdl.node import ReplicaNode
from polyrdl.oracle import oracle_digest
from polyrdl.persistence import (
    SnapshotStore,
    Wal,
    recover,
    scan_wal,
    wal_prune,
)
from polyrdl.replica import Replica


def make_node(tmp_path, rid="A"):
    return ReplicaNode(Replica(rid), data_dir=str(tmp_path))


def test_append_then_recover(tmp_path):
    node = make_node(tmp_path)
    node.local_update("c", ObjectType.COUNTER, CounterAdd(5))
    node.close()
    recovered = recover(str(tmp_path), "A")
    assert recovered.access("c", ObjectType.COUNTER).value == 5
    assert recovered.next_seq == 2


def test_recover_empty_dir(tmp_path):
    recovered = recover(str(tmp_path), "A")
    assert recovered.state_digest() == Replica("A").state_digest()


def test_torn_tail_truncated(tmp_path):
    node = make_node(tmp_path)
    updates = [node.local_update("c", ObjectType.COUNTER, CounterAdd(i)) for i in range(5)]
    node.close()
    wal_path = os.path.join(str(tmp_path), "wal.log")
    size = os.path.getsize(wal_path)
    with open(wal_path, "r+b") as f:
        f.truncate(size - 3)  # tear the last record
    recovered = recover(str(tmp_path), "A")
    assert recovered.state_digest() == oracle_digest(updates[:4])
    # the truncation is persistent
    _, _, torn = scan_wal(wal_path)
    assert not torn


def test_interior_corruption_is_fatal(tmp_path):
    node = make_node(tmp_path)
    for i in range(5):
        node.local_update("c", ObjectType.COUNTER, CounterAdd(i))
    node.close()
    wal_path = os.path.join(str(tmp_path), "wal.log")
    with open(wal_path, "r+b") as f:
        f.seek(12)  # inside the first record's body
        f.write(b"\xff\xff")
    with pytest.raises(WalCorruption):
        recover(str(tmp_path), "A")


def test_snapshot_plus_wal_suffix(tmp_path):
    node = make_node(tmp_path)
    pool = [node.local_update("c", ObjectType.COUNTER, CounterAdd(i)) for i in range(3)]
    node.write_snapshot()
    pool += [node.local_update("s", ObjectType.SET, SetAdd(bytes([i]))) for i in range(3)]
    live = node.digest()
    node.close()
    recovered = recover(str(tmp_path), "A")
    assert recovered.state_digest() == live
    assert recovered.state_digest() == oracle_digest(pool)
    assert recovered.next_seq == 7


def test_snapshot_prune_then_recover(tmp_path):
    node = make_node(tmp_path)
    for _ in range(4):
        node.local_update("c", ObjectType.COUNTER, CounterAdd(1))
    assert node.write_snapshot() == 1
    node.local_update("c", ObjectType.COUNTER, CounterAdd(10))
    live = node.digest()
    wal_path = os.path.join(str(tmp_path), "wal.log")
    node.close()
    wal_prune(wal_path, 4)
    bodies, _, _ = scan_wal(wal_path)
    assert len(bodies) == 1  # only the post-snapshot record remains
    container = SnapshotStore(str(tmp_path)).load_latest()
    assert container.wal_record_index == 4
    recovered = recover(str(tmp_path), "A")
    assert recovered.access("c", ObjectType.COUNTER).value == 14
    assert recovered.state_digest() == live


def test_corrupt_latest_snapshot_falls_back(tmp_path):
    node = make_node(tmp_path)
    node.local_update("c", ObjectType.COUNTER, CounterAdd(1))
    node.write_snapshot()
    node.local_update("c", ObjectType.COUNTER, CounterAdd(2))
    live = node.digest()
    node.close()
    # a crash mid-snapshot-write leaves a garbage newer snapshot
    with open(os.path.join(str(tmp_path), "snap-2.bin"), "wb") as f:
        f.write(b"HRS1\x01garbage-without-valid-crc")
    recovered = recover(str(tmp_path), "A")
    assert recovered.state_digest() == live


def test_recovery_idempotent(tmp_path):
    node = make_node(tmp_path)
    for i in range(10):
        node.local_update("m", ObjectType.MAP, MapPut(f"k{i}", i))
    node.write_snapshot()
    node.local_update("m", ObjectType.MAP, MapPut("late", "x"))
    node.close()
    first = recover(str(tmp_path), "A")
    second = recover(str(tmp_path), "A")
    assert first.state_digest() == second.state_digest()
    assert first.next_seq == second.next_seq


def test_checkpoint_labels_unique(tmp_path):
    node = make_node(tmp_path)
    node.local_update("c", ObjectType.COUNTER, CounterAdd(1))
    node.checkpoint("c1")
    with pytest.raises(PersistenceError):
        node.checkpoint("c1")
    assert node.checkpoints.labels() == ["c1"]
    node.close()


def test_crash_point_sweep_small(tmp_path):
    """Mini crash sweep; the full 100-point sweep runs in acceptance."""
    node = make_node(tmp_path)
    pool = []
    for i in range(12):
        if i % 3 == 0:
            pool.append(node.local_update("c", ObjectType.COUNTER, CounterAdd(i)))
        elif i % 3 == 1:
            pool.append(node.local_update("s", ObjectType.SET, SetAdd(bytes([i]))))
        else:
            pool.append(node.local_update("m", ObjectType.MAP, MapPut(f"k{i}", i)))
    node.close()
    wal_path = os.path.join(str(tmp_path), "wal.log")
    with open(wal_path, "rb") as f:
        blob = f.read()
    # record boundaries
    bodies, _, _ = scan_wal(wal_path)
    offsets = [0]
    for body in bodies:
        offsets.append(offsets[-1] + 8 + len(body))
    for k, off in enumerate(offsets):
        crash_dir = tmp_path / f"crash{k}"
        os.makedirs(crash_dir)
        with open(crash_dir / "wal.log", "wb") as f:
            f.write(blob[:off])
        recovered = recover(str(crash_dir), "A")
        assert recovered.state_digest() == oracle_digest(pool[:k])


def test_wal_fail_stop(tmp_path):
    wal = Wal(str(tmp_path / "wal.log"))
    wal.close()
    with pytest.raises(PersistenceError):
        wal.append(Replica("A").local_update("c", ObjectType.COUNTER, CounterAdd(1)))
