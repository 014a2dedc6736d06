"""Reference plug-ins: logging completeness, undo per op kind, rollback."""

import pytest

from polyrdl.model import (
    CounterAdd,
    LamportStamp,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    ObjectType,
    SetAdd,
    SetRemove,
    Update,
    UpdateId,
)
from polyrdl.oracle import oracle_digest
from polyrdl.plugins.logging_plugin import LoggingPlugin, query
from polyrdl.plugins.undo_plugin import (
    IDEMPOTENT_NOOP,
    UNKNOWN_UPDATE,
    UndoError,
    UndoPlugin,
)
from polyrdl.plugins.rollback_plugin import RollbackPlugin
from polyrdl.scenario import Scenario, SimFleet
from polyrdl.plugin_manager import OK, PluginManager
from polyrdl import wire

from plugin_harness import Host, free_port, wait_for, write_metadata


def remote(rid, seq, lamport, object_id, object_type, op, epoch=0):
    return Update(
        id=UpdateId(rid, seq),
        stamp=LamportStamp(lamport, rid),
        epoch=epoch,
        object_id=object_id,
        object_type=object_type,
        op=op,
    )


# -- logging -------------------------------------------------------------------

def test_logging_counts_and_query(tmp_path):
    host = Host()
    log_file = str(tmp_path / "audit.jsonl")
    port = free_port()
    plugin = LoggingPlugin("logging", port, log_file)
    plugin.start()
    meta = write_metadata(
        tmp_path / "logging.json",
        plugin_id="logging",
        address=port,
        subscriptions=["update", "merge"],
        permissions=[],
    )
    assert host.manager.integrate_plugins(["logging"], [meta])["logging"].status == OK
    plugin.wait_connected(5)

    local_n = 7
    for i in range(local_n):
        host.run(lambda n, i=i: n.local_update("c", ObjectType.COUNTER, CounterAdd(i)))
    merged = [
        remote("B", 1, 1, "s", ObjectType.SET, SetAdd(b"x")),
        remote("B", 2, 2, "c", ObjectType.COUNTER, CounterAdd(5)),
    ]
    report = host.run(lambda n: n.handle_sync(wire.SyncMessage("B", 0, [], merged)))
    assert report.applied == 2

    applied_total = host.run(lambda n: n.applied_local + n.applied_remote)
    assert wait_for(lambda: plugin.records_written == applied_total)

    assert len(query(log_file)) == applied_total
    only_b = query(log_file, replica_id="B")
    assert len(only_b) == 2 and all(r["core_function"] == "merge" for r in only_b)
    assert len(query(log_file, object_id="s")) == 1
    assert query(str(tmp_path / "missing.jsonl")) == []
    plugin.stop()
    host.close()


# -- undo ----------------------------------------------------------------------

@pytest.fixture
def undo_host(tmp_path):
    host = Host()
    port = free_port()
    plugin = UndoPlugin("undo", port)
    plugin.start()
    meta = write_metadata(
        tmp_path / "undo.json",
        plugin_id="undo",
        address=port,
        subscriptions=["update", "merge"],
        permissions=["update"],
    )
    assert host.manager.integrate_plugins(["undo"], [meta])["undo"].status == OK
    plugin.wait_connected(5)
    yield host, plugin
    plugin.stop()
    host.close()


def _wait_mirrored(host, plugin):
    want = host.run(lambda n: len(n.replica.log))
    assert wait_for(lambda: len(plugin.shadow) == want)


def _undo_and_check(host, plugin, target):
    """Undo one update and assert digest == oracle(applied ∪ compensations)."""
    _wait_mirrored(host, plugin)
    issued = plugin.undo(target.id)
    _wait_mirrored(host, plugin)
    pool = host.run(lambda n: list(n.replica.log))
    assert host.run(lambda n: n.digest()) == oracle_digest(pool)
    return issued


def test_undo_counter_add(undo_host):
    host, plugin = undo_host
    target = host.run(lambda n: n.local_update("c", ObjectType.COUNTER, CounterAdd(5)))
    host.run(lambda n: n.local_update("c", ObjectType.COUNTER, CounterAdd(2)))
    issued = _undo_and_check(host, plugin, target)
    assert [u.op for u in issued] == [CounterAdd(-5)]
    assert host.run(lambda n: n.access("c", ObjectType.COUNTER).value) == 2


def test_undo_set_add_is_surgical(undo_host):
    host, plugin = undo_host
    target = host.run(lambda n: n.local_update("s", ObjectType.SET, SetAdd(b"x")))
    other_add = remote("B", 1, 1, "s", ObjectType.SET, SetAdd(b"x"))
    host.run(lambda n: n.handle_sync(wire.SyncMessage("B", 0, [], [other_add])))
    _undo_and_check(host, plugin, target)
    # the concurrent tag from B keeps the element present
    assert host.run(lambda n: n.access("s").value) == [b"x"]


def test_undo_set_remove_readds(undo_host):
    host, plugin = undo_host
    host.run(lambda n: n.local_update("s", ObjectType.SET, SetAdd(b"x")))
    target = host.run(
        lambda n: n.local_update(
            "s",
            ObjectType.SET,
            SetRemove(b"x", tuple(n.replica.store.get("s", ObjectType.SET).live.get(b"x", {}))),
        )
    )
    assert host.run(lambda n: n.access("s").value) == []
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("s").value) == [b"x"]


def test_undo_map_put_restores_prior_value(undo_host):
    host, plugin = undo_host
    host.run(lambda n: n.local_update("m", ObjectType.MAP, MapPut("k", 1)))
    target = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapPut("k", 2)))
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("m").value) == [("k", 1)]


def test_undo_map_put_on_fresh_key_removes_it(undo_host):
    host, plugin = undo_host
    target = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapPut("k", 9)))
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("m").value) == []


def test_undo_map_put_over_counter_resurfaces_it(undo_host):
    host, plugin = undo_host
    host.run(lambda n: n.local_update("m", ObjectType.MAP, MapCounterAdd("k", 4)))
    target = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapPut("k", "oops")))
    assert host.run(lambda n: n.access("m").value) == [("k", "oops")]
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("m").value) == [("k", ("counter", 4))]


def test_undo_map_remove_key_recreates_content(undo_host):
    host, plugin = undo_host
    host.run(lambda n: n.local_update("m", ObjectType.MAP, MapCounterAdd("k", 7)))
    target = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapRemoveKey("k")))
    assert host.run(lambda n: n.access("m").value) == []
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("m").value) == [("k", ("counter", 7))]


def test_undo_map_counter_add(undo_host):
    host, plugin = undo_host
    target = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapCounterAdd("k", 6)))
    host.run(lambda n: n.local_update("m", ObjectType.MAP, MapCounterAdd("k", 1)))
    _undo_and_check(host, plugin, target)
    assert host.run(lambda n: n.access("m").value) == [("k", ("counter", 1))]


def test_undo_map_set_add_and_remove(undo_host):
    host, plugin = undo_host
    target_add = host.run(lambda n: n.local_update("m", ObjectType.MAP, MapSetAdd("k", b"e")))
    _undo_and_check(host, plugin, target_add)
    assert host.run(lambda n: n.access("m").value) == [("k", [])]

    host.run(lambda n: n.local_update("m", ObjectType.MAP, MapSetAdd("k", b"f")))
    _wait_mirrored(host, plugin)
    target_rm = host.run(
        lambda n: n.local_update(
            "m",
            ObjectType.MAP,
            MapSetRemove(
                "k",
                b"f",
                tuple(
                    t
                    for t, (el, _) in n.replica.store.get("m", ObjectType.MAP)
                    .entries["k"]
                    .adds.items()
                    if el == b"f"
                ),
            ),
        )
    )
    assert host.run(lambda n: n.access("m").value) == [("k", [])]
    _undo_and_check(host, plugin, target_rm)
    assert host.run(lambda n: n.access("m").value) == [("k", [b"f"])]


def test_undo_unknown_and_idempotent(undo_host):
    host, plugin = undo_host
    target = host.run(lambda n: n.local_update("c", ObjectType.COUNTER, CounterAdd(3)))
    _wait_mirrored(host, plugin)
    with pytest.raises(UndoError) as err:
        plugin.undo(UpdateId("nobody", 99))
    assert err.value.reason == UNKNOWN_UPDATE
    plugin.undo(target.id)
    with pytest.raises(UndoError) as err:
        plugin.undo(target.id)
    assert err.value.reason == IDEMPOTENT_NOOP


# -- rollback over the simulated network ----------------------------------------

def test_rollback_scenario_simulated(tmp_path):
    import threading
    import time

    scenario = Scenario(seed=77, replicas=3)
    managers = {"R0": PluginManager()}
    dirs = {"R0": str(tmp_path / "r0")}
    fleet = SimFleet(scenario, data_dirs=dirs, plugins=managers)

    port = free_port()
    plugin = RollbackPlugin("rollback", port)
    plugin.start()
    meta = write_metadata(
        tmp_path / "rollback.json",
        plugin_id="rollback",
        address=port,
        subscriptions=[],
        permissions=["update", "sync"],
    )
    assert managers["R0"].integrate_plugins(["rollback"], [meta])["rollback"].status == OK
    plugin.wait_connected(5)

    node = fleet.nodes["R0"]

    def plugin_call(fn):
        # The blocking plugin call runs on a side thread; this thread owns
        # the fleet and pumps commands into it, like an event loop would.
        box = {}

        def runner():
            box["result"] = fn()

        t = threading.Thread(target=runner)
        t.start()
        while t.is_alive():
            fleet.pump_plugins()
            fleet.net.run_until_empty()
            time.sleep(0.002)
        t.join()
        return box["result"]

    def counter_at(rid):
        return fleet.nodes[rid].replica.access("likes", ObjectType.COUNTER).value

    for _ in range(10):
        node.local_update("likes", ObjectType.COUNTER, CounterAdd(1))
    fleet.final_round()
    assert [counter_at(r) for r in fleet.nodes] == [10, 10, 10]

    plugin_call(lambda: plugin.checkpoint("c1"))
    for _ in range(3):
        node.local_update("likes", ObjectType.COUNTER, CounterAdd(1))
    fleet.final_round()
    assert [counter_at(r) for r in fleet.nodes] == [13, 13, 13]

    reset = plugin_call(lambda: plugin.restore("c1"))
    fleet.final_round()
    assert reset.epoch == 1
    assert [counter_at(r) for r in fleet.nodes] == [10, 10, 10]
    assert len(set(fleet.digests().values())) == 1

    node.local_update("likes", ObjectType.COUNTER, CounterAdd(1))
    fleet.final_round()
    assert [counter_at(r) for r in fleet.nodes] == [11, 11, 11]

    plugin.stop()
    fleet.close()


def test_rollback_unknown_checkpoint(tmp_path):
    host = Host(data_dir=str(tmp_path / "host"))
    port = free_port()
    plugin = RollbackPlugin("rollback", port)
    plugin.start()
    meta = write_metadata(
        tmp_path / "rollback.json",
        plugin_id="rollback",
        address=port,
        subscriptions=[],
        permissions=["update", "sync"],
    )
    assert host.manager.integrate_plugins(["rollback"], [meta])["rollback"].status == OK
    plugin.wait_connected(5)
    from polyrdl.plugins.base import PluginCallError
    from polyrdl.plugin_manager import ERR_UNKNOWN_CHECKPOINT

    with pytest.raises(PluginCallError) as err:
        plugin.restore("ghost")
    assert err.value.code == ERR_UNKNOWN_CHECKPOINT
    plugin.stop()
    host.close()


def test_stale_epoch_for_inflight_pre_restore_update(tmp_path):
    """An update issued before the restore but delivered after it is stale."""
    host = Host(data_dir=str(tmp_path / "host"))
    port = free_port()
    plugin = RollbackPlugin("rollback", port)
    plugin.start()
    meta = write_metadata(
        tmp_path / "rollback.json",
        plugin_id="rollback",
        address=port,
        subscriptions=[],
        permissions=["update", "sync"],
    )
    assert host.manager.integrate_plugins(["rollback"], [meta])["rollback"].status == OK
    plugin.wait_connected(5)

    host.run(lambda n: n.local_update("likes", ObjectType.COUNTER, CounterAdd(10)))
    plugin.checkpoint("c1")
    in_flight = remote("B", 1, 1, "likes", ObjectType.COUNTER, CounterAdd(100), epoch=0)
    plugin.restore("c1")
    report = host.run(lambda n: n.handle_sync(wire.SyncMessage("B", 0, [], [in_flight])))
    assert report.stale == 1
    assert host.run(lambda n: n.access("likes", ObjectType.COUNTER).value) == 10
    plugin.stop()
    host.close()
