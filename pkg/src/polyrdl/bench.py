"""Benchmark harness: per-type op ladders measuring the core
functionalities (access, update, merge, propagate).

Each (data_type, op_count) row runs in a fresh spawned subprocess so RSS
readings do not inherit a previous workload's allocator high-water mark.
Peak memory is sampled from the OS at a 10 ms cadence (approximate by
design).  Workload generation happens before the timed region; op
latency covers library work only.
"""

from __future__ import annotations

import multiprocessing as mp
import random
import statistics
import threading
import time
from dataclasses import dataclass
from typing import List, Tuple

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
)
from .node import ReplicaNode
from .replica import Replica

CSV_HEADER = "data_type,op_count,mean_op_latency_ns,sync_latency_ns,peak_rss_bytes,throughput_ops_s"

_KEYS = [f"k{i}" for i in range(100)]
_SET_ELEMENTS = [bytes([i, j]) * 16 for i in range(16) for j in range(16)]
# Map workloads carry realistic record-sized values; counters carry ints.
_MAP_ELEMENTS = [bytes([i]) * 256 for i in range(64)]
_MAP_VALUES = ["v" * 256, "w" * 256, "u" * 256, 1234567, 3.5]


@dataclass
class BenchConfig:
    """Bench ladder settings.

    mix gives the update/access split; sync is a fixed number of full
    rounds spread through the workload (a full-log round costs O(log), so
    a per-op sync share would quadratically swamp the latency trend the
    ladder is meant to expose).
    """

    types: Tuple[str, ...] = ("counter", "set", "map")
    op_counts: Tuple[int, ...] = (100, 1000, 10000)
    reps: int = 5
    seed: int = 1
    mix: Tuple[float, float] = (0.7, 0.2)  # update / access weights
    sync_rounds: int = 10


@dataclass
class BenchRow:
    data_type: str
    op_count: int
    mean_op_latency_ns: float
    sync_latency_ns: float
    peak_rss_bytes: int  # -1 when sampling is unavailable
    throughput_ops_s: float

    def csv(self) -> str:
        rss = "NA" if self.peak_rss_bytes < 0 else str(self.peak_rss_bytes)
        return (
            f"{self.data_type},{self.op_count},{self.mean_op_latency_ns:.0f},"
            f"{self.sync_latency_ns:.0f},{rss},{self.throughput_ops_s:.0f}"
        )


class _RssSampler:
    def __init__(self, cadence: float = 0.010):
        self.cadence = cadence
        self.peak = -1
        self._stop = threading.Event()
        try:
            import psutil

            self._proc = psutil.Process()
        except Exception:
            self._proc = None

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                rss = self._proc.memory_info().rss
            except Exception:
                return
            if rss > self.peak:
                self.peak = rss
            self._stop.wait(self.cadence)

    def __enter__(self):
        if self._proc is not None:
            self.peak = self._proc.memory_info().rss
            self._thread = threading.Thread(target=self._run, daemon=True)
            self._thread.start()
        return self

    def __exit__(self, *exc):
        self._stop.set()
        if self._proc is not None:
            self._thread.join()


def _gen_workload(
    data_type: str, op_count: int, seed: int, mix, sync_rounds: int = 10
) -> List[tuple]:
    """Pre-generated op decisions; excluded from the timed region."""
    rng = random.Random(seed)
    ops: List[tuple] = []
    sync_every = max(1, op_count // max(1, sync_rounds))
    update_share = mix[0] / (mix[0] + mix[1])
    for i in range(op_count):
        if i % sync_every == sync_every - 1:
            ops.append(("sync", None, None, None))
            continue
        r = rng.random()
        if r < update_share:
            if data_type == "counter":
                ops.append(("update", "bench", ObjectType.COUNTER, ("ctr", rng.randint(-10, 10))))
            elif data_type == "set":
                if rng.random() < 0.7:
                    ops.append(("update", "bench", ObjectType.SET, ("sadd", rng.choice(_SET_ELEMENTS))))
                else:
                    ops.append(("update", "bench", ObjectType.SET, ("srem", rng.choice(_SET_ELEMENTS))))
            else:
                key = rng.choice(_KEYS)
                roll = rng.random()
                if roll < 0.35:
                    ops.append(("update", "bench", ObjectType.MAP, ("mput", key, rng.choice(_MAP_VALUES))))
                elif roll < 0.45:
                    ops.append(("update", "bench", ObjectType.MAP, ("mrk", key)))
                elif roll < 0.70:
                    ops.append(("update", "bench", ObjectType.MAP, ("mctr", key, rng.randint(-5, 5))))
                elif roll < 0.90:
                    ops.append(("update", "bench", ObjectType.MAP, ("msadd", key, rng.choice(_MAP_ELEMENTS))))
                else:
                    ops.append(("update", "bench", ObjectType.MAP, ("msrem", key, rng.choice(_MAP_ELEMENTS))))
        else:
            ops.append(("access", "bench", None, None))
    return ops


def _build_op(node: ReplicaNode, spec: tuple):
    kind = spec[0]
    if kind == "ctr":
        return CounterAdd(spec[1])
    if kind == "sadd":
        return SetAdd(spec[1])
    if kind == "srem":
        element = spec[1]
        state = node.replica.store.get("bench", ObjectType.SET)
        observed = tuple(state.live.get(element, {})) if state else ()
        return SetRemove(element, observed)
    if kind == "mput":
        return MapPut(spec[1], spec[2])
    if kind == "mrk":
        return MapRemoveKey(spec[1])
    if kind == "mctr":
        return MapCounterAdd(spec[1], spec[2])
    if kind == "msadd":
        return MapSetAdd(spec[1], spec[2])
    state = node.replica.store.get("bench", ObjectType.MAP)
    observed = ()
    if state is not None and spec[1] in state.entries:
        observed = tuple(
            tag for tag, (el, _) in state.entries[spec[1]].adds.items() if el == spec[2]
        )
    return MapSetRemove(spec[1], spec[2], observed)


def run_row(data_type: str, op_count: int, seed: int, mix=(0.7, 0.2), sync_rounds: int = 10) -> BenchRow:
    """One measurement: a workload replica syncing into a merge target.

    Op latency covers the replica under test: update, access, and the
    propagate side of sync.  The target's merge work runs between timed
    regions; the dedicated full sync round (propagate + merge) is
    reported separately as sync_latency_ns.
    """
    ops = _gen_workload(data_type, op_count, seed, mix, sync_rounds)
    source = ReplicaNode(Replica("A"))
    target = ReplicaNode(Replica("B"))
    type_hint = {"counter": ObjectType.COUNTER, "set": ObjectType.SET, "map": ObjectType.MAP}[
        data_type
    ]
    clock = time.perf_counter_ns
    op_ns = 0
    with _RssSampler() as sampler:
        for entry in ops:
            action, object_id, object_type, spec = entry
            if action == "update":
                node_op = _build_op(source, spec)
                t0 = clock()
                source.local_update(object_id, object_type, node_op)
                op_ns += clock() - t0
            elif action == "access":
                t0 = clock()
                source.access(object_id, type_hint)
                op_ns += clock() - t0
            else:
                t0 = clock()
                payload = source.encode_sync()  # propagate
                op_ns += clock() - t0
                target.handle_sync_bytes(payload)  # merge, at the receiver
        # One dedicated full sync round: propagate + merge.
        t1 = clock()
        target.handle_sync_bytes(source.encode_sync())
        sync_ns = clock() - t1
    return BenchRow(
        data_type=data_type,
        op_count=op_count,
        mean_op_latency_ns=op_ns / max(1, op_count),
        sync_latency_ns=sync_ns,
        peak_rss_bytes=sampler.peak,
        throughput_ops_s=op_count / (op_ns / 1e9),
    )


def _row_child(data_type: str, op_count: int, seed: int, mix, sync_rounds, conn) -> None:
    import gc

    # The forked child inherits the parent's heap; freeze it so collector
    # passes during the timed region do not rescan it (which would charge
    # long workloads disproportionately and skew the latency trend).
    gc.collect()
    gc.freeze()
    row = run_row(data_type, op_count, seed, mix, sync_rounds)
    conn.send(row.__dict__)
    conn.close()


def _run_row_isolated(data_type: str, op_count: int, seed: int, mix, sync_rounds) -> BenchRow:
    # Forked children start from the (slim) parent, so every row sees the
    # same RSS baseline instead of inheriting a previous row's peak.
    try:
        ctx = mp.get_context("fork")
    except ValueError:
        ctx = mp.get_context("spawn")
    parent, child = ctx.Pipe()
    proc = ctx.Process(target=_row_child, args=(data_type, op_count, seed, mix, sync_rounds, child))
    proc.start()
    if not parent.poll(600):
        proc.terminate()
        raise RuntimeError(f"bench row {data_type}/{op_count} timed out")
    payload = parent.recv()
    proc.join()
    return BenchRow(**payload)


def bench_run(config: BenchConfig, isolate: bool = True) -> List[BenchRow]:
    rows: List[BenchRow] = []
    for data_type in config.types:
        for op_count in config.op_counts:
            samples = []
            for rep in range(config.reps):
                seed = config.seed + rep
                if isolate:
                    samples.append(
                        _run_row_isolated(data_type, op_count, seed, config.mix, config.sync_rounds)
                    )
                else:
                    samples.append(run_row(data_type, op_count, seed, config.mix, config.sync_rounds))
            rows.append(_mean_row(samples))
    return rows


def _mean_row(samples: List[BenchRow]) -> BenchRow:
    rss = [s.peak_rss_bytes for s in samples if s.peak_rss_bytes >= 0]
    return BenchRow(
        data_type=samples[0].data_type,
        op_count=samples[0].op_count,
        mean_op_latency_ns=statistics.mean(s.mean_op_latency_ns for s in samples),
        sync_latency_ns=statistics.mean(s.sync_latency_ns for s in samples),
        peak_rss_bytes=int(statistics.mean(rss)) if rss else -1,
        throughput_ops_s=statistics.mean(s.throughput_ops_s for s in samples),
    )


def write_csv(rows: List[BenchRow], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(CSV_HEADER + "\n")
        for row in rows:
            f.write(row.csv() + "\n")


def format_table(rows: List[BenchRow]) -> str:
    lines = [
        f"{'type':<8} {'ops':>7} {'op latency':>12} {'sync':>12} {'peak RSS':>12} {'ops/s':>10}"
    ]
    for r in rows:
        rss = "N/A" if r.peak_rss_bytes < 0 else f"{r.peak_rss_bytes / 1e6:.1f} MB"
        lines.append(
            f"{r.data_type:<8} {r.op_count:>7} {r.mean_op_latency_ns / 1e3:>9.1f} us "
            f"{r.sync_latency_ns / 1e6:>9.2f} ms {rss:>12} {r.throughput_ops_s:>10.0f}"
        )
    return "\n".join(lines)
