#!/usr/bin/env python3
"""Two replica services converging over loopback TCP, end to end."""

import os
import sys
import tempfile
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from polyrdl.model import CounterAdd, MapCounterAdd, ObjectType, SetAdd  # noqa: E402
from polyrdl.service import ReplicaService  # noqa: E402


def main() -> int:
    base = tempfile.mkdtemp(prefix="rdl-demo-")
    a = ReplicaService(
        "A", listen="127.0.0.1:7001", peers=["127.0.0.1:7002"],
        data_dir=os.path.join(base, "a"), sync_interval=0.2,
    ).start()
    b = ReplicaService(
        "B", listen="127.0.0.1:7002", peers=["127.0.0.1:7001"],
        data_dir=os.path.join(base, "b"), sync_interval=0.2,
    ).start()

    a.local_update("likes", ObjectType.COUNTER, CounterAdd(5))
    b.local_update("likes", ObjectType.COUNTER, CounterAdd(-2))
    a.local_update("registry", ObjectType.SET, SetAdd(b"vase"))
    b.local_update("registry", ObjectType.SET, SetAdd(b"vase"))
    b.local_update("cart", ObjectType.MAP, MapCounterAdd("sku-7", 2))

    deadline = time.time() + 10
    while time.time() < deadline and a.digest() != b.digest():
        time.sleep(0.1)

    print("A likes:", a.access("likes", ObjectType.COUNTER).value)
    print("B registry:", b.access("registry").value)
    print("A cart:", a.access("cart").value)
    print("digest A:", a.digest().hex())
    print("digest B:", b.digest().hex())
    same = a.digest() == b.digest()
    a.stop()
    b.stop()
    print("converged" if same else "DIVERGED")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
