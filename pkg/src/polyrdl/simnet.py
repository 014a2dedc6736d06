"""Deterministic simulated network with seeded delays and partitions.

Outcomes are a pure function of (seed, schedule, send sequence): delays
come from one seeded RNG, ties break on a monotone sequence number, and
frames blocked by an active partition are held and re-queued for the
partition's heal time, so every frame is delivered exactly once.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import InvalidOperation


@dataclass(frozen=True)
class PartitionWindow:
    start: float
    end: float
    links: Tuple[Tuple[str, str], ...]  # unordered pairs, stored sorted

    def __post_init__(self):
        if not (self.end > self.start >= 0):
            raise InvalidOperation("partition windows must heal: end > start >= 0")

    def blocks(self, a: str, b: str, t: float) -> bool:
        if not (self.start <= t < self.end):
            return False
        pair = (a, b) if a <= b else (b, a)
        return pair in self.links


def make_window(start: float, end: float, links) -> PartitionWindow:
    norm = tuple(sorted(tuple(sorted(pair)) for pair in links))
    return PartitionWindow(start, end, norm)


@dataclass
class PartitionSchedule:
    windows: List[PartitionWindow] = field(default_factory=list)

    def blocked_until(self, a: str, b: str, t: float) -> Optional[float]:
        """Latest heal time among windows blocking (a, b) at time t."""
        heal = None
        for w in self.windows:
            if w.blocks(a, b, t):
                heal = w.end if heal is None else max(heal, w.end)
        return heal


class SimNet:
    def __init__(
        self,
        seed: int,
        min_delay: float = 1.0,
        max_delay: float = 5.0,
        fifo: bool = True,
        schedule: Optional[PartitionSchedule] = None,
    ):
        self.rng = random.Random(seed)
        self.min_delay = min_delay
        self.max_delay = max_delay
        self.fifo = fifo
        self.schedule = schedule or PartitionSchedule()
        self.now = 0.0
        self._seq = 0
        self._heap: List[Tuple[float, int, str, str, bytes]] = []
        self._endpoints: Dict[str, Callable[[str, bytes], None]] = {}
        self._last_link_time: Dict[Tuple[str, str], float] = {}
        self.trace: List[Tuple[float, str, str, int]] = []

    def register(self, replica_id: str, deliver: Callable[[str, bytes], None]) -> None:
        if replica_id in self._endpoints:
            raise InvalidOperation(f"duplicate endpoint {replica_id!r}")
        self._endpoints[replica_id] = deliver

    @property
    def endpoints(self):
        return list(self._endpoints)

    def send(self, src: str, dst: str, data: bytes) -> None:
        if dst not in self._endpoints:
            raise InvalidOperation(f"unknown endpoint {dst!r}")
        due = self.now + self.rng.uniform(self.min_delay, self.max_delay)
        if self.fifo:
            link = (src, dst)
            prev = self._last_link_time.get(link, 0.0)
            if due < prev:
                due = prev
            self._last_link_time[link] = due
        self._seq += 1
        heapq.heappush(self._heap, (due, self._seq, src, dst, data))

    def broadcast(self, src: str, data: bytes) -> None:
        for dst in self._endpoints:
            if dst != src:
                self.send(src, dst, data)

    def pending(self) -> int:
        return len(self._heap)

    def step(self) -> int:
        """Deliver the next due frame (holding partitioned ones); 0 if idle."""
        while self._heap:
            due, seq, src, dst, data = heapq.heappop(self._heap)
            heal = self.schedule.blocked_until(src, dst, due)
            if heal is not None:
                heapq.heappush(self._heap, (heal, seq, src, dst, data))
                continue
            self.now = max(self.now, due)
            self.trace.append((due, src, dst, len(data)))
            self._endpoints[dst](src, data)
            return 1
        return 0

    def run_until(self, t: float) -> int:
        """Deliver every frame due at or before virtual time t."""
        delivered = 0
        while self._heap:
            due, seq, src, dst, data = heapq.heappop(self._heap)
            heal = self.schedule.blocked_until(src, dst, due)
            if heal is not None and heal > due:
                # Held frame re-sorts at its heal time; each re-push moves
                # it strictly past a window end, so this terminates.
                heapq.heappush(self._heap, (heal, seq, src, dst, data))
                continue
            if due > t:
                heapq.heappush(self._heap, (due, seq, src, dst, data))
                break
            self.now = max(self.now, due)
            self.trace.append((due, src, dst, len(data)))
            self._endpoints[dst](src, data)
            delivered += 1
        if self.now < t:
            self.now = t
        return delivered

    def run_until_empty(self, max_events: int = 1_000_000) -> int:
        delivered = 0
        while self._heap:
            if delivered >= max_events:
                raise RuntimeError("simulated network did not quiesce")
            delivered += self.step()
        return delivered

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for due, src, dst, size in self.trace:
            h.update(f"{due:.9f}|{src}|{dst}|{size}\n".encode())
        return h.hexdigest()
