"""Deterministic multi-replica scenarios over the simulated network.

A Scenario fully determines its outcome: workload ops, their timing and
origin replicas, sync rounds, and partition windows all derive from one
seed.  After the workload quiesces and partitions heal, every replica
broadcasts its full log once more; the run then asserts that all replica
digests are equal and match the independent oracle fold of every update
the workload originated.
"""

from __future__ import annotations

import json
import os
import random
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import RdlError
from .model import (
    CounterAdd,
    MapCounterAdd,
    MapPut,
    MapRemoveKey,
    MapSetAdd,
    MapSetRemove,
    MergeReport,
    ObjectType,
    SetAdd,
    SetRemove,
    Update,
)
from .node import ReplicaNode
from .oracle import oracle_digest
from .replica import Replica
from .simnet import PartitionSchedule, SimNet, make_window
from . import wire


class DivergenceError(RdlError):
    def __init__(self, message: str, artifact: Optional[str] = None):
        super().__init__(message)
        self.artifact = artifact


@dataclass
class Scenario:
    seed: int
    replicas: int = 3
    op_count: int = 300
    duration: float = 1000.0
    sync_period: float = 200.0
    mix: Tuple[float, float, float] = (0.7, 0.2, 0.1)  # update / access / sync
    types: Tuple[str, ...] = ("counter", "set", "map")
    # (start, end, [(a, b), ...]); every window must heal before `duration`+slack.
    partitions: List[Tuple[float, float, List[Tuple[str, str]]]] = field(default_factory=list)
    min_delay: float = 1.0
    max_delay: float = 8.0
    plugins: Tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        raw = json.loads(text)
        raw["mix"] = tuple(raw["mix"])
        raw["types"] = tuple(raw["types"])
        raw["plugins"] = tuple(raw.get("plugins", ()))
        raw["partitions"] = [
            (start, end, [tuple(pair) for pair in links])
            for start, end, links in raw.get("partitions", [])
        ]
        return cls(**raw)


@dataclass
class ScenarioResult:
    digests: Dict[str, str]
    oracle: str
    converged: bool
    trace_hash: str
    delivered: int
    updates_total: int
    reports: List[MergeReport] = field(default_factory=list)


_COUNTERS = ("c0", "c1", "c2")
_SETS = ("s0", "s1")
_MAPS = ("m0", "m1")
_KEYS = ("k1", "k2", "k3", "k4")
_ELEMENTS = (b"x", b"y", b"z", b"w")
_SCALARS = (0, 7, -3, 2.5, True, False, "red", "blue", b"\x01\x02")


class SimFleet:
    """N replicas joined by one simulated network."""

    def __init__(self, scenario: Scenario, data_dirs: Optional[Dict[str, str]] = None, plugins=None):
        self.scenario = scenario
        schedule = PartitionSchedule(
            [make_window(start, end, links) for start, end, links in scenario.partitions]
        )
        self.net = SimNet(
            seed=scenario.seed ^ 0x5EED,
            min_delay=scenario.min_delay,
            max_delay=scenario.max_delay,
            schedule=schedule,
        )
        self.nodes: Dict[str, ReplicaNode] = {}
        self.reports: List[MergeReport] = []
        for i in range(scenario.replicas):
            rid = f"R{i}"
            node = ReplicaNode(
                Replica(rid),
                data_dir=(data_dirs or {}).get(rid),
                plugins=(plugins or {}).get(rid),
            )
            node.sync_hook = (lambda r: (lambda: self.broadcast(r)))(rid)
            self.nodes[rid] = node
            self.net.register(rid, self._deliver(rid))

    def _deliver(self, rid: str):
        def deliver(src: str, data: bytes) -> None:
            got = wire.decode_frame(data)
            if got is None:
                raise RdlError("truncated frame in simulation")
            msg_type, payload, _ = got
            if msg_type == wire.MSG_SYNC:
                report = self.nodes[rid].handle_sync_bytes(payload)
                self.reports.append(report)

        return deliver

    def broadcast(self, rid: str) -> Tuple[int, int]:
        node = self.nodes[rid]
        payload = node.encode_sync()
        frame = wire.encode_frame(wire.MSG_SYNC, payload)
        self.net.broadcast(rid, frame)
        peers = len(self.nodes) - 1
        node.record_sync(len(node.replica.log), peers)
        return (len(node.replica.log), peers)

    def final_round(self) -> None:
        self.net.run_until_empty()
        for rid in self.nodes:
            self.broadcast(rid)
        self.net.run_until_empty()

    def digests(self) -> Dict[str, str]:
        return {rid: node.digest().hex() for rid, node in self.nodes.items()}

    def pump_plugins(self) -> None:
        for node in self.nodes.values():
            node.pump_plugins()

    def close(self) -> None:
        for node in self.nodes.values():
            node.close()


def _pick_weighted(rng: random.Random, mix) -> str:
    r = rng.random() * (mix[0] + mix[1] + mix[2])
    if r < mix[0]:
        return "update"
    if r < mix[0] + mix[1]:
        return "access"
    return "sync"


def _random_op(rng: random.Random, node: ReplicaNode, types) -> Tuple[str, ObjectType, object]:
    kind = rng.choice(types)
    if kind == "counter":
        return (rng.choice(_COUNTERS), ObjectType.COUNTER, CounterAdd(rng.randint(-10, 10)))
    if kind == "set":
        oid = rng.choice(_SETS)
        element = rng.choice(_ELEMENTS)
        if rng.random() < 0.6:
            return (oid, ObjectType.SET, SetAdd(element))
        state = node.replica.store.get(oid, ObjectType.SET)
        observed = ()
        if state is not None:
            observed = tuple(state.live.get(element, {}))
        return (oid, ObjectType.SET, SetRemove(element, observed))
    oid = rng.choice(_MAPS)
    key = rng.choice(_KEYS)
    roll = rng.random()
    if roll < 0.30:
        return (oid, ObjectType.MAP, MapPut(key, rng.choice(_SCALARS)))
    if roll < 0.42:
        return (oid, ObjectType.MAP, MapRemoveKey(key))
    if roll < 0.65:
        return (oid, ObjectType.MAP, MapCounterAdd(key, rng.randint(-5, 5)))
    if roll < 0.85:
        return (oid, ObjectType.MAP, MapSetAdd(key, rng.choice(_ELEMENTS)))
    element = rng.choice(_ELEMENTS)
    state = node.replica.store.get(oid, ObjectType.MAP)
    observed = ()
    if state is not None and key in state.entries:
        entry = state.entries[key]
        observed = tuple(
            tag for tag, (el, _) in entry.adds.items() if el == element
        )
    return (oid, ObjectType.MAP, MapSetRemove(key, element, observed))


def run_scenario(scenario: Scenario, artifact_dir: Optional[str] = None) -> ScenarioResult:
    if scenario.plugins:
        raise RdlError("run_scenario drives plugin-free scenarios; wire plugins via SimFleet")
    rng = random.Random(scenario.seed)
    fleet = SimFleet(scenario)
    rids = list(fleet.nodes)

    # Event timeline: workload ops plus periodic sync ticks.
    events: List[Tuple[float, int, str, str]] = []
    horizon = scenario.duration * 0.8
    for _ in range(scenario.op_count):
        events.append((rng.uniform(0.0, horizon), 0, rng.choice(rids), "op"))
    tick = scenario.sync_period
    while tick < scenario.duration:
        for rid in rids:
            events.append((tick + rng.uniform(0.0, scenario.sync_period / 4), 1, rid, "sync"))
        tick += scenario.sync_period
    events.sort(key=lambda e: (e[0], e[1], e[2]))

    originated: List[Update] = []
    for t, _, rid, what in events:
        fleet.net.run_until(t)
        node = fleet.nodes[rid]
        if what == "sync":
            fleet.broadcast(rid)
            continue
        action = _pick_weighted(rng, scenario.mix)
        if action == "update":
            object_id, object_type, op = _random_op(rng, node, scenario.types)
            originated.append(node.local_update(object_id, object_type, op))
        elif action == "access":
            pool = {"counter": _COUNTERS, "set": _SETS, "map": _MAPS}[rng.choice(scenario.types)]
            node.access(rng.choice(pool))
        else:
            fleet.broadcast(rid)

    heal_time = max(
        [scenario.duration] + [end for _, end, _ in scenario.partitions]
    )
    fleet.net.run_until(heal_time + 1.0)
    fleet.final_round()

    digests = fleet.digests()
    oracle_hex = oracle_digest(originated).hex()
    converged = len(set(digests.values())) == 1 and next(iter(digests.values())) == oracle_hex
    result = ScenarioResult(
        digests=digests,
        oracle=oracle_hex,
        converged=converged,
        trace_hash=fleet.net.trace_hash(),
        delivered=len(fleet.net.trace),
        updates_total=len(originated),
        reports=fleet.reports,
    )
    if not converged:
        artifact = _dump_divergence(scenario, fleet, originated, artifact_dir)
        raise DivergenceError(
            f"divergence: digests={digests} oracle={oracle_hex}", artifact
        )
    return result


def scenario_for_seed(seed: int) -> Scenario:
    """Standard sweep scenario: 3 replicas, mixed ops, healing partitions."""
    rng = random.Random(seed * 2654435761 % 2**32)
    op_count = rng.randint(300, 1000)
    duration = 1000.0
    partitions = []
    for _ in range(rng.randint(1, 2)):
        start = rng.uniform(0.05, 0.5) * duration
        end = start + rng.uniform(0.1, 0.4) * duration
        pair = rng.sample(["R0", "R1", "R2"], 2)
        partitions.append((start, min(end, duration * 0.9), [tuple(pair)]))
    return Scenario(
        seed=seed,
        replicas=3,
        op_count=op_count,
        duration=duration,
        partitions=partitions,
    )


def _sweep_worker(seeds) -> Tuple[int, int, int]:
    ok = updates_total = 0
    for seed in seeds:
        result = run_scenario(scenario_for_seed(seed))
        ok += result.converged
        updates_total += result.updates_total
    return ok, len(seeds), updates_total


def run_confluence_sweep(count: int = 1000, processes: int = 2, start: int = 0):
    """Run `count` seeded scenarios; -> (converged, total, updates folded)."""
    seeds = list(range(start, start + count))
    if processes <= 1:
        return _sweep_worker(seeds)
    from multiprocessing import get_context

    chunks = [seeds[i::processes] for i in range(processes)]
    with get_context("fork").Pool(processes) as pool:
        results = pool.map(_sweep_worker, chunks)
    return tuple(sum(col) for col in zip(*results))


def _dump_divergence(scenario, fleet, originated, artifact_dir) -> str:
    directory = artifact_dir or tempfile.mkdtemp(prefix="divergence-")
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"scenario-{scenario.seed}.json")
    payload = {
        "scenario": json.loads(scenario.to_json()),
        "digests": fleet.digests(),
        "trace": [
            {"t": t, "src": src, "dst": dst, "bytes": size}
            for t, src, dst, size in fleet.net.trace
        ],
        "updates": [wire.encode_update(u).hex() for u in originated],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
    return path
