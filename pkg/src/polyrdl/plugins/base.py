"""Plug-in-side protocol peer.

A plug-in is a process that listens on a loopback port; the replica host
connects in, both sides exchange HELLO, and from then on the host pushes
subscribed events while the plug-in may issue commands.  Command replies
arrive as events with event_seq 0 (or as PluginError frames) and
correlate FIFO with the commands sent.
"""

from __future__ import annotations

import queue
import socket
import threading
from typing import Optional

from ..errors import PluginError
from .. import wire


class PluginCallError(PluginError):
    def __init__(self, code: int, message: str):
        super().__init__(f"plugin command failed [{code:#06x}]: {message}")
        self.code = code
        self.message = message


class PluginPeer:
    def __init__(self, plugin_id: str, listen_port: int, schema_version: int = 1):
        self.plugin_id = plugin_id
        self.listen_port = listen_port
        self.schema_version = schema_version
        self._listener: Optional[socket.socket] = None
        self._conn: Optional[socket.socket] = None
        self._conn_ready = threading.Event()
        self._replies: "queue.Queue" = queue.Queue()
        self._cmd_lock = threading.Lock()
        self._cmd_seq = 0
        self._stop = False
        self._threads = []

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind(("127.0.0.1", self.listen_port))
        listener.listen(1)
        self._listener = listener
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)

    def wait_connected(self, timeout: float = 10.0) -> bool:
        return self._conn_ready.wait(timeout)

    def stop(self) -> None:
        self._stop = True
        for sock in (self._conn, self._listener):
            if sock is not None:
                try:
                    sock.close()
                except OSError:
                    pass

    def _accept_loop(self) -> None:
        while not self._stop:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            try:
                self._handshake(conn)
            except (wire.DecodeError, ValueError, OSError):
                conn.close()
                continue
            self._conn = conn
            self._conn_ready.set()
            self._read_loop(conn)
            self._conn_ready.clear()
            self._conn = None

    def _handshake(self, conn: socket.socket) -> None:
        hello = wire.PluginHello(self.plugin_id, self.schema_version)
        conn.sendall(wire.encode_frame(wire.MSG_PLUGIN_HELLO, wire.encode_hello(hello)))
        buf = wire.FrameBuffer()
        conn.settimeout(10.0)
        while True:
            got = buf.next_frame()
            if got is not None:
                break
            data = conn.recv(65536)
            if not data:
                raise ValueError("host closed during HELLO")
            buf.feed(data)
        msg_type, payload = got
        if msg_type != wire.MSG_PLUGIN_HELLO:
            raise ValueError("expected HELLO from host")
        reply = wire.decode_hello(payload)
        if reply.plugin_id != self.plugin_id:
            raise ValueError("host HELLO names a different plugin")
        conn.settimeout(None)

    def _read_loop(self, conn: socket.socket) -> None:
        buf = wire.FrameBuffer()
        while not self._stop:
            try:
                data = conn.recv(65536)
            except OSError:
                return
            if not data:
                return
            buf.feed(data)
            try:
                while True:
                    got = buf.next_frame()
                    if got is None:
                        break
                    self._handle_frame(*got)
            except wire.DecodeError:
                conn.close()
                return

    def _handle_frame(self, msg_type: int, payload: bytes) -> None:
        if msg_type == wire.MSG_PLUGIN_EVENT:
            event = wire.decode_event(payload)
            if event.event_seq == 0:
                self._replies.put(event)
            else:
                self.on_event(event)
        elif msg_type == wire.MSG_PLUGIN_ERR:
            self._replies.put(wire.decode_plugin_error(payload))

    # -- overridables ----------------------------------------------------------

    def on_event(self, event: wire.PluginEvent) -> None:
        """Subscribed-event callback; runs on the session reader thread."""

    # -- commands ----------------------------------------------------------------

    def command(self, core_function: str, args: bytes, timeout: float = 10.0) -> wire.PluginEvent:
        conn = self._conn
        if conn is None:
            raise PluginError("no live host session")
        with self._cmd_lock:
            self._cmd_seq += 1
            cmd = wire.PluginCommand(self._cmd_seq, core_function, args)
            conn.sendall(wire.encode_frame(wire.MSG_PLUGIN_CMD, wire.encode_command(cmd)))
            reply = self._replies.get(timeout=timeout)
        if isinstance(reply, wire.PluginErrorMsg):
            raise PluginCallError(reply.code, reply.message)
        return reply

    def command_update(self, object_id: str, object_type: int, op) -> wire.PluginEvent:
        return self.command("update", wire.encode_update_args(object_id, object_type, op))
