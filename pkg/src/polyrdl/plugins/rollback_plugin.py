"""Rollback plug-in: named checkpoints and epoch-bumping restores.

checkpoint(label) asks the host to persist its current resolved state
under the label.  restore(label) asks the host to emit a store-wide
Reset carrying that checkpoint's body and epoch+1; the Reset applies
locally and propagates through ordinary sync, so every replica converges
to the checkpointed state, discarding lower-epoch stragglers.
"""

from __future__ import annotations

import argparse
import sys
import time
from typing import List

from ..errors import PluginError
from .. import wire
from .base import PluginCallError, PluginPeer


class RollbackPlugin(PluginPeer):
    def __init__(self, plugin_id: str, listen_port: int):
        super().__init__(plugin_id, listen_port)
        self.labels: List[str] = []

    def checkpoint(self, label: str) -> None:
        self.command("checkpoint", wire.encode_label_args(label))
        self.labels.append(label)

    def restore(self, label: str):
        """-> the Reset update the host emitted."""
        reply = self.command("restore", wire.encode_label_args(label))
        reset = wire.decode_update(reply.result_view)
        # Propagate promptly rather than waiting for the next timer tick.
        try:
            self.command("sync", b"")
        except PluginCallError:
            pass  # sync permission is optional; the periodic sync still runs
        return reset


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="rollback plug-in")
    parser.add_argument("--id", required=True)
    parser.add_argument("--listen", required=True, type=int)
    parser.add_argument("--checkpoint-dir", default=None, help="label bookkeeping dir")
    args = parser.parse_args(argv)
    plugin = RollbackPlugin(args.id, args.listen)
    plugin.start()
    # Trigger channel: stdin lines "checkpoint <label>" / "restore <label>".
    try:
        for line in sys.stdin:
            fields = line.split()
            if len(fields) != 2:
                continue
            verb, label = fields
            try:
                if verb == "checkpoint":
                    plugin.checkpoint(label)
                    print(f"checkpoint ok: {label}", flush=True)
                elif verb == "restore":
                    reset = plugin.restore(label)
                    print(f"restore ok: epoch {reset.epoch}", flush=True)
            except PluginError as exc:
                print(f"{verb} failed: {exc}", flush=True)
    except KeyboardInterrupt:
        pass
    plugin.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
