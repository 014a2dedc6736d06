"""Plug-in integration and the host side of the plug-in protocol.

Integration runs per plug-in id, in order: consult the JSON metadata,
generate the wire-schema table the session will use, validate it against
the core function registry, then deploy (spawn and/or connect over
loopback TCP) and exchange HELLO frames.  A failure at any step is
recorded in that plug-in's report and integration proceeds with the next
plug-in; one bad descriptor never aborts the batch.

Isolation: plug-in I/O runs on per-session threads; command effects are
queued and executed only when the replica's loop owner calls pump(); a
dead or slow plug-in never blocks the replica.  Each session's event
queue is bounded (drop-oldest) with a visible drop counter.
"""

from __future__ import annotations

import json
import os
import socket
import subprocess
import threading
import time
import queue
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from .errors import InvalidOperation, PersistenceError
from .model import ObjectType, Reset
from . import wire

PLUGIN_SCHEMA_VERSION = 1
CORE_FUNCTIONS = ("access", "update", "sync", "merge")
# Extra command verbs and the core permission that gates each of them.
EXTENDED_COMMANDS = {"checkpoint": "update", "restore": "update"}

EVENT_QUEUE_CAP = 10_000
HELLO_TIMEOUT = 5.0
CONNECT_TIMEOUT = 5.0

# PluginError codes.
ERR_PERMISSION_DENIED = 0x0001
ERR_BAD_ARGS = 0x0002
ERR_UNKNOWN_FUNCTION = 0x0003
ERR_CORE_REJECTED = 0x0004
ERR_UNKNOWN_CHECKPOINT = 0x0005
ERR_DUPLICATE_LABEL = 0x0006

# Per-plugin integration statuses.
OK = "OK"
METADATA_MISSING = "METADATA_MISSING"
SCHEMA_ERROR = "SCHEMA_ERROR"
VALIDATE_ERROR = "VALIDATE_ERROR"
PORT_CONFLICT = "PORT_CONFLICT"
DEPLOY_ERROR = "DEPLOY_ERROR"
HELLO_MISMATCH = "HELLO_MISMATCH"

_METADATA_KEYS = {
    "plugin_id": str,
    "name": str,
    "address": int,
    "executable": str,
    "subscriptions": list,
    "permissions": list,
    "schema_version": int,
}

# Wire-schema layouts per function: (argument layout, result layout).
_WIRE_LAYOUTS = {
    "access": ("object_id:str type_hint:u8", "value_view"),
    "update": ("object_id:str object_type:u8 op:op_fields", "update"),
    "sync": ("", "sync_stats"),
    "merge": ("sync_message:bytes", "merge_report"),
    "checkpoint": ("label:str", ""),
    "restore": ("label:str", "update"),
}


@dataclass
class PluginDescriptor:
    plugin_id: str
    name: str
    address: int
    executable: str
    subscriptions: Tuple[str, ...]
    permissions: Tuple[str, ...]
    schema_version: int


@dataclass
class PluginReport:
    status: str
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK


def parse_metadata(path: str) -> PluginDescriptor:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError("metadata root must be a JSON object")
    for key, typ in _METADATA_KEYS.items():
        if key not in raw:
            raise ValueError(f"missing metadata key {key!r}")
        if not isinstance(raw[key], typ) or isinstance(raw[key], bool):
            raise ValueError(f"metadata key {key!r} has wrong type")
    extra = set(raw) - set(_METADATA_KEYS)
    if extra:
        raise ValueError(f"unknown metadata keys {sorted(extra)}")
    return PluginDescriptor(
        plugin_id=raw["plugin_id"],
        name=raw["name"],
        address=raw["address"],
        executable=raw["executable"],
        subscriptions=tuple(raw["subscriptions"]),
        permissions=tuple(raw["permissions"]),
        schema_version=raw["schema_version"],
    )


def generate_wire_schema(descriptor: PluginDescriptor) -> Dict[str, Tuple[str, str]]:
    """The function-name -> payload-layout table this session will use."""
    functions = set(descriptor.subscriptions) | set(descriptor.permissions)
    if "update" in descriptor.permissions:
        functions |= set(EXTENDED_COMMANDS)
    return {fn: _WIRE_LAYOUTS[fn] for fn in sorted(functions) if fn in _WIRE_LAYOUTS}


def validate_descriptor(descriptor: PluginDescriptor, schema: Dict[str, Tuple[str, str]]) -> None:
    if not descriptor.plugin_id:
        raise ValueError("plugin_id must be nonempty")
    if not (1024 <= descriptor.address <= 65535):
        raise ValueError(f"address {descriptor.address} outside [1024, 65535]")
    if descriptor.schema_version != PLUGIN_SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {descriptor.schema_version}")
    for fn in descriptor.subscriptions:
        if fn not in CORE_FUNCTIONS:
            raise ValueError(f"unknown subscription {fn!r}")
    for fn in descriptor.permissions:
        if fn not in CORE_FUNCTIONS:
            raise ValueError(f"unknown permission {fn!r}")
    for fn in set(descriptor.subscriptions) | set(descriptor.permissions):
        if fn not in schema:
            raise ValueError(f"no wire layout generated for {fn!r}")


class PluginSession:
    def __init__(self, descriptor: PluginDescriptor, sock: socket.socket, manager: "PluginManager"):
        self.descriptor = descriptor
        self.sock = sock
        self.manager = manager
        self.event_seq = 0
        self.dropped_events = 0
        self.alive = True
        self._outbox: deque = deque()
        self._cv = threading.Condition()
        self._writer = threading.Thread(target=self._write_loop, daemon=True)
        self._reader = threading.Thread(target=self._read_loop, daemon=True)

    def start(self) -> None:
        self._writer.start()
        self._reader.start()

    # -- outgoing ----------------------------------------------------------

    def _enqueue(self, frame: bytes) -> None:
        with self._cv:
            if len(self._outbox) >= EVENT_QUEUE_CAP:
                self._outbox.popleft()
                self.dropped_events += 1
            self._outbox.append(frame)
            self._cv.notify()

    def send_event(self, core_function: str, replica_id: str, update, result_view: bytes) -> None:
        if not self.alive:
            self.dropped_events += 1
            return
        self.event_seq += 1
        event = wire.PluginEvent(self.event_seq, core_function, replica_id, update, result_view)
        self._enqueue(wire.encode_frame(wire.MSG_PLUGIN_EVENT, wire.encode_event(event)))

    def send_reply(self, core_function: str, replica_id: str, update, result_view: bytes) -> None:
        # Command replies carry event_seq 0: they ride outside the gapless
        # subscription stream and correlate FIFO with the commands.
        event = wire.PluginEvent(0, core_function, replica_id, update, result_view)
        self._enqueue(wire.encode_frame(wire.MSG_PLUGIN_EVENT, wire.encode_event(event)))

    def send_error(self, ref_seq: int, code: int, message: str) -> None:
        err = wire.PluginErrorMsg(ref_seq, code, message)
        self._enqueue(wire.encode_frame(wire.MSG_PLUGIN_ERR, wire.encode_plugin_error(err)))

    # -- threads -----------------------------------------------------------

    def _write_loop(self) -> None:
        while True:
            with self._cv:
                while not self._outbox and self.alive:
                    self._cv.wait(timeout=0.5)
                if not self.alive and not self._outbox:
                    return
                frame = self._outbox.popleft()
            try:
                self.sock.sendall(frame)
            except OSError:
                self.alive = False
                return

    def _read_loop(self) -> None:
        buf = wire.FrameBuffer()
        while self.alive:
            try:
                data = self.sock.recv(65536)
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
                    if msg_type == wire.MSG_PLUGIN_CMD:
                        cmd = wire.decode_command(payload)
                        self.manager.command_queue.put((self, cmd))
            except wire.DecodeError:
                break  # decode errors are connection-fatal
        self.alive = False

    def close(self) -> None:
        self.alive = False
        with self._cv:
            self._cv.notify_all()
        try:
            self.sock.close()
        except OSError:
            pass


class PluginManager:
    def __init__(self):
        self.sessions: Dict[str, PluginSession] = {}
        self.command_queue: "queue.Queue[Tuple[PluginSession, wire.PluginCommand]]" = queue.Queue()
        self.spawned: List[subprocess.Popen] = []

    # -- integration (Procedure 1) ------------------------------------------

    def integrate_plugins(
        self, plugin_ids: List[str], metadata_paths: List[str]
    ) -> Dict[str, PluginReport]:
        if not plugin_ids or len(plugin_ids) != len(metadata_paths):
            raise InvalidOperation("plugin_ids and metadata_paths must be parallel and nonempty")
        report: Dict[str, PluginReport] = {}
        for pid, meta_path in zip(plugin_ids, metadata_paths):
            report[pid] = self._integrate_one(pid, meta_path)
        return report

    def _integrate_one(self, pid: str, meta_path: str) -> PluginReport:
        try:
            descriptor = parse_metadata(meta_path)
        except FileNotFoundError:
            return PluginReport(METADATA_MISSING, meta_path)
        except (ValueError, json.JSONDecodeError) as exc:
            return PluginReport(SCHEMA_ERROR, str(exc))

        schema = None
        try:
            schema = generate_wire_schema(descriptor)
            validate_descriptor(descriptor, schema)
            if descriptor.plugin_id != pid:
                raise ValueError(
                    f"metadata names plugin {descriptor.plugin_id!r}, expected {pid!r}"
                )
            if pid in self.sessions and self.sessions[pid].alive:
                raise ValueError(f"plugin id {pid!r} already integrated")
        except (KeyError, ValueError) as exc:
            return PluginReport(VALIDATE_ERROR, str(exc))

        for other in self.sessions.values():
            if other.alive and other.descriptor.address == descriptor.address:
                return PluginReport(PORT_CONFLICT, f"port {descriptor.address} in use")

        proc = None
        try:
            if descriptor.executable != "external":
                proc = subprocess.Popen(
                    [
                        descriptor.executable,
                        "--id",
                        descriptor.plugin_id,
                        "--listen",
                        str(descriptor.address),
                    ],
                    stdout=subprocess.DEVNULL,
                    stderr=subprocess.DEVNULL,
                )
            sock = self._connect(descriptor.address)
        except OSError as exc:
            if proc is not None:
                proc.terminate()
            return PluginReport(DEPLOY_ERROR, str(exc))

        try:
            self._hello_exchange(sock, descriptor)
        except (wire.DecodeError, ValueError, OSError) as exc:
            sock.close()
            if proc is not None:
                proc.terminate()
            return PluginReport(HELLO_MISMATCH, str(exc))

        if proc is not None:
            self.spawned.append(proc)
        session = PluginSession(descriptor, sock, self)
        self.sessions[pid] = session
        session.start()
        return PluginReport(OK)

    @staticmethod
    def _connect(port: int) -> socket.socket:
        deadline = time.monotonic() + CONNECT_TIMEOUT
        last: Optional[OSError] = None
        while time.monotonic() < deadline:
            try:
                return socket.create_connection(("127.0.0.1", port), timeout=1.0)
            except OSError as exc:
                last = exc
                time.sleep(0.05)
        raise last or OSError("connect timed out")

    @staticmethod
    def _hello_exchange(sock: socket.socket, descriptor: PluginDescriptor) -> None:
        sock.settimeout(HELLO_TIMEOUT)
        buf = wire.FrameBuffer()
        while True:
            got = buf.next_frame()
            if got is not None:
                break
            data = sock.recv(65536)
            if not data:
                raise ValueError("plugin closed before HELLO")
            buf.feed(data)
        msg_type, payload = got
        if msg_type != wire.MSG_PLUGIN_HELLO:
            raise ValueError(f"expected HELLO, got msg_type {msg_type:#x}")
        hello = wire.decode_hello(payload)
        if hello.plugin_id != descriptor.plugin_id:
            raise ValueError(f"HELLO names {hello.plugin_id!r}")
        if hello.schema_version != descriptor.schema_version:
            raise ValueError(f"HELLO schema_version {hello.schema_version}")
        reply = wire.PluginHello(descriptor.plugin_id, descriptor.schema_version)
        sock.sendall(wire.encode_frame(wire.MSG_PLUGIN_HELLO, wire.encode_hello(reply)))
        sock.settimeout(None)

    # -- event dispatch -------------------------------------------------------

    def dispatch_event(self, core_function: str, replica_id: str, update, result_view: bytes) -> None:
        for session in self.sessions.values():
            if core_function in session.descriptor.subscriptions:
                session.send_event(core_function, replica_id, update, result_view)

    # -- command execution ----------------------------------------------------

    def pump(self, node) -> int:
        """Execute queued plug-in commands against the node; loop-owner only."""
        handled = 0
        while True:
            try:
                session, cmd = self.command_queue.get_nowait()
            except queue.Empty:
                return handled
            self._execute(node, session, cmd)
            handled += 1

    def _execute(self, node, session: PluginSession, cmd: wire.PluginCommand) -> None:
        fn = cmd.core_function
        gate = fn if fn in CORE_FUNCTIONS else EXTENDED_COMMANDS.get(fn)
        if gate is None:
            session.send_error(cmd.cmd_seq, ERR_UNKNOWN_FUNCTION, f"unknown function {fn!r}")
            return
        if gate not in session.descriptor.permissions:
            session.send_error(cmd.cmd_seq, ERR_PERMISSION_DENIED, f"{fn!r} requires {gate!r}")
            return
        rid = node.replica_id
        try:
            if fn == "access":
                object_id, hint = wire.decode_access_args(cmd.args)
                type_hint = ObjectType(hint) if hint else None
                view = node.access(object_id, type_hint)
                session.send_reply(fn, rid, None, wire.encode_value_view(view))
            elif fn == "update":
                object_id, object_type, op = wire.decode_update_args(cmd.args)
                if isinstance(op, Reset):
                    raise wire.DecodeError("Reset is issued via the restore command")
                u = node.local_update(object_id, object_type, op)
                session.send_reply(fn, rid, u, wire.encode_update(u))
            elif fn == "sync":
                update_count, peers = node.request_sync()
                session.send_reply(fn, rid, None, wire.encode_sync_stats(update_count, peers))
            elif fn == "merge":
                report = node.handle_sync_bytes(cmd.args)
                session.send_reply(fn, rid, None, wire.encode_merge_report(report))
            elif fn == "checkpoint":
                label = wire.decode_label_args(cmd.args)
                try:
                    node.checkpoint(label)
                except PersistenceError as exc:
                    session.send_error(cmd.cmd_seq, ERR_DUPLICATE_LABEL, str(exc))
                    return
                session.send_reply(fn, rid, None, b"")
            elif fn == "restore":
                label = wire.decode_label_args(cmd.args)
                try:
                    u = node.restore(label)
                except PersistenceError as exc:
                    session.send_error(cmd.cmd_seq, ERR_UNKNOWN_CHECKPOINT, str(exc))
                    return
                session.send_reply(fn, rid, u, wire.encode_update(u))
        except wire.DecodeError as exc:
            session.send_error(cmd.cmd_seq, ERR_BAD_ARGS, str(exc))
        except InvalidOperation as exc:
            session.send_error(cmd.cmd_seq, ERR_CORE_REJECTED, str(exc))

    def close(self) -> None:
        for session in self.sessions.values():
            session.close()
        for proc in self.spawned:
            proc.terminate()
        for proc in self.spawned:
            try:
                proc.wait(timeout=3)
            except subprocess.TimeoutExpired:
                proc.kill()
