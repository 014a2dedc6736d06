"""Long-running replica service: TCP transport around a ReplicaNode.

One event-loop thread owns the node; socket readers, acceptors, dialers
and timers only enqueue work into its mailbox.  Frames are length-framed
per the wire module; a decode error is connection-fatal (close, then the
dialer reconnects with exponential backoff).  On every (re)connect each
side immediately sends a full sync broadcast, so reconnection doubles as
anti-entropy.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from typing import List, Optional, Tuple

from .errors import RdlError
from .model import ObjectType, OpPayload, ReplicaConfig
from .node import ReplicaNode
from .replica import Replica
from . import wire

BACKOFF_BASE = 0.1
BACKOFF_CAP = 5.0


def parse_addr(text: str) -> Tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or "127.0.0.1", int(port))


class _Conn:
    def __init__(self, sock: socket.socket, label: str):
        self.sock = sock
        self.label = label
        self.alive = True
        self.lock = threading.Lock()

    def send(self, data: bytes) -> bool:
        if not self.alive:
            return False
        try:
            with self.lock:
                self.sock.sendall(data)
            return True
        except OSError:
            self.close()
            return False

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass


class ReplicaService:
    def __init__(
        self,
        replica_id: str,
        listen: Optional[str] = None,
        peers: Optional[List[str]] = None,
        data_dir: Optional[str] = None,
        plugins=None,
        sync_interval: Optional[float] = None,
        config: Optional[ReplicaConfig] = None,
        recover_state: bool = False,
    ):
        if recover_state and data_dir:
            self.node = ReplicaNode.recover_from(data_dir, replica_id, config, plugins=plugins)
        else:
            self.node = ReplicaNode(Replica(replica_id, config), data_dir=data_dir, plugins=plugins)
        self.node.sync_hook = self._broadcast_now
        self.listen_addr = parse_addr(listen) if listen else None
        self.peer_addrs = [parse_addr(p) for p in (peers or [])]
        self.sync_interval = sync_interval
        self._mailbox: "queue.Queue" = queue.Queue()
        self._conns: List[_Conn] = []
        self._conns_lock = threading.Lock()
        self._stop = threading.Event()
        self._threads: List[threading.Thread] = []
        self._listener: Optional[socket.socket] = None
        self.merge_reports = 0

    # -- lifecycle -------------------------------------------------------

    def start(self) -> "ReplicaService":
        self._spawn(self._loop, "loop")
        if self.listen_addr:
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            listener.bind(self.listen_addr)
            listener.listen(16)
            self._listener = listener
            self._spawn(self._accept_loop, "accept")
        for addr in self.peer_addrs:
            self._spawn(lambda a=addr: self._dial_loop(a), f"dial-{addr[1]}")
        if self.sync_interval:
            self._spawn(self._timer_loop, "timer")
        return self

    def stop(self) -> None:
        self._stop.set()
        self._mailbox.put(("stop", None))
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        with self._conns_lock:
            for conn in self._conns:
                conn.close()
        for t in self._threads:
            t.join(timeout=5)
        self.node.close()

    def _spawn(self, target, name: str) -> None:
        t = threading.Thread(target=target, name=f"{self.node.replica_id}-{name}", daemon=True)
        t.start()
        self._threads.append(t)

    # -- event loop --------------------------------------------------------

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                kind, payload = self._mailbox.get(timeout=0.05)
            except queue.Empty:
                self.node.pump_plugins()
                continue
            if kind == "stop":
                return
            if kind == "merge":
                try:
                    self.node.handle_sync_bytes(payload)
                    self.merge_reports += 1
                except wire.DecodeError:
                    pass  # the reader already closed the connection
            elif kind == "broadcast":
                self._broadcast_now()
            elif kind == "send_full":
                frame = wire.encode_frame(wire.MSG_SYNC, self.node.encode_sync())
                payload.send(frame)
            elif kind == "call":
                fn, box = payload
                try:
                    box["result"] = fn(self.node)
                except Exception as exc:  # surfaced to the caller
                    box["error"] = exc
                box["event"].set()
            self.node.pump_plugins()

    def _broadcast_now(self) -> Tuple[int, int]:
        frame = wire.encode_frame(wire.MSG_SYNC, self.node.encode_sync())
        with self._conns_lock:
            conns = [c for c in self._conns if c.alive]
        for conn in conns:
            conn.send(frame)
        self.node.record_sync(len(self.node.replica.log), len(conns))
        return (len(self.node.replica.log), len(conns))

    # -- transport ----------------------------------------------------------

    def _register_conn(self, sock: socket.socket, label: str) -> _Conn:
        conn = _Conn(sock, label)
        with self._conns_lock:
            self._conns = [c for c in self._conns if c.alive] + [conn]
        self._mailbox.put(("send_full", conn))
        return conn

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                return
            conn = self._register_conn(sock, f"in:{addr}")
            self._spawn(lambda c=conn: self._read_loop(c), f"read-{addr[1]}")

    def _dial_loop(self, addr: Tuple[str, int]) -> None:
        backoff = BACKOFF_BASE
        while not self._stop.is_set():
            try:
                sock = socket.create_connection(addr, timeout=2.0)
            except OSError:
                self._stop.wait(backoff)
                backoff = min(backoff * 2, BACKOFF_CAP)
                continue
            backoff = BACKOFF_BASE
            conn = self._register_conn(sock, f"out:{addr}")
            self._read_loop(conn)  # returns on disconnect; then redial

    def _read_loop(self, conn: _Conn) -> None:
        buf = wire.FrameBuffer()
        while not self._stop.is_set() and conn.alive:
            try:
                data = conn.sock.recv(65536)
            except OSError:
                break
            if not data:
                break
            buf.feed(data)
            try:
                while True:
                    got = buf.next_frame()
                    if got is None:
                        break
                    msg_type, payload = got
                    if msg_type == wire.MSG_SYNC:
                        self._mailbox.put(("merge", payload))
            except wire.DecodeError:
                break  # connection-fatal
        conn.close()

    def _timer_loop(self) -> None:
        while not self._stop.wait(self.sync_interval):
            self._mailbox.put(("broadcast", None))

    # -- thread-safe façade ---------------------------------------------------

    def call(self, fn, timeout: float = 30.0):
        """Run fn(node) on the event loop thread and return its result."""
        box = {"event": threading.Event()}
        self._mailbox.put(("call", (fn, box)))
        if not box["event"].wait(timeout):
            raise RdlError("service call timed out")
        if "error" in box:
            raise box["error"]
        return box["result"]

    def local_update(self, object_id: str, object_type: ObjectType, op: OpPayload):
        return self.call(lambda node: node.local_update(object_id, object_type, op))

    def access(self, object_id: str, type_hint: Optional[ObjectType] = None):
        return self.call(lambda node: node.access(object_id, type_hint))

    def broadcast(self) -> Tuple[int, int]:
        return self.call(lambda node: self._broadcast_now())

    def digest(self) -> bytes:
        return self.call(lambda node: node.digest())
