"""Audit-trail plug-in: appends one JSONL record per observed update.

Record fields: wall_time, replica_id, core_function, update (CDF hex),
stamp {lamport, replica_id}, epoch.  The file is append-only and ordered
by event arrival.
"""

from __future__ import annotations

import argparse
import json
import threading
import time
from typing import List, Optional

from .. import wire
from .base import PluginPeer


class LoggingPlugin(PluginPeer):
    def __init__(self, plugin_id: str, listen_port: int, log_file: str):
        super().__init__(plugin_id, listen_port)
        self.log_file = log_file
        self._file_lock = threading.Lock()
        self.records_written = 0

    def on_event(self, event: wire.PluginEvent) -> None:
        if event.core_function not in ("update", "merge") or event.update is None:
            return
        u = event.update
        record = {
            "wall_time": time.time(),
            "replica_id": event.replica_id,
            "core_function": event.core_function,
            "update": wire.encode_update(u).hex(),
            "stamp": {"lamport": u.stamp.lamport, "replica_id": u.stamp.replica_id},
            "epoch": u.epoch,
        }
        line = json.dumps(record, sort_keys=True)
        with self._file_lock:
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(line + "\n")
            self.records_written += 1


def query(
    log_file: str,
    since: Optional[float] = None,
    until: Optional[float] = None,
    replica_id: Optional[str] = None,
    object_id: Optional[str] = None,
) -> List[dict]:
    """Read-only filter over the audit file."""
    out: List[dict] = []
    try:
        f = open(log_file, "r", encoding="utf-8")
    except FileNotFoundError:
        return out
    with f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if since is not None and record["wall_time"] < since:
                continue
            if until is not None and record["wall_time"] > until:
                continue
            if replica_id is not None and record["stamp"]["replica_id"] != replica_id:
                continue
            if object_id is not None:
                u = wire.decode_update(bytes.fromhex(record["update"]))
                if u.object_id != object_id:
                    continue
            out.append(record)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="audit-trail plug-in")
    parser.add_argument("--id", required=True)
    parser.add_argument("--listen", required=True, type=int)
    parser.add_argument("--log-file", default="audit.jsonl")
    args = parser.parse_args(argv)
    plugin = LoggingPlugin(args.id, args.listen, args.log_file)
    plugin.start()
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        plugin.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
