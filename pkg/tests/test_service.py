"""TCP replica service: convergence, reconnect anti-entropy, fatal decode."""

import socket
import time

from polyrdl.model import CounterAdd, ObjectType, SetAdd
from polyrdl.service import ReplicaService

from plugin_harness import free_port, wait_for


def converge(services, timeout=15.0):
    def same():
        digests = {s.digest() for s in services}
        return len(digests) == 1

    return wait_for(same, timeout=timeout, interval=0.1)


def test_two_service_convergence(tmp_path):
    p1, p2 = free_port(), free_port()
    a = ReplicaService(
        "A", listen=f"127.0.0.1:{p1}", peers=[f"127.0.0.1:{p2}"],
        data_dir=str(tmp_path / "a"), sync_interval=0.1,
    ).start()
    b = ReplicaService(
        "B", listen=f"127.0.0.1:{p2}", peers=[f"127.0.0.1:{p1}"],
        data_dir=str(tmp_path / "b"), sync_interval=0.1,
    ).start()
    try:
        for i in range(20):
            a.local_update("c", ObjectType.COUNTER, CounterAdd(i))
            b.local_update("s", ObjectType.SET, SetAdd(bytes([i])))
        assert converge([a, b])
        assert a.access("c", ObjectType.COUNTER).value == sum(range(20))
    finally:
        a.stop()
        b.stop()


def test_kill_and_restart_converges(tmp_path):
    p1, p2 = free_port(), free_port()
    a = ReplicaService(
        "A", listen=f"127.0.0.1:{p1}", peers=[f"127.0.0.1:{p2}"],
        data_dir=str(tmp_path / "a"), sync_interval=0.1,
    ).start()
    b = ReplicaService(
        "B", listen=f"127.0.0.1:{p2}", peers=[f"127.0.0.1:{p1}"],
        data_dir=str(tmp_path / "b"), sync_interval=0.1,
    ).start()
    try:
        for i in range(10):
            b.local_update("c", ObjectType.COUNTER, CounterAdd(1))
        assert converge([a, b])
        b.stop()  # crash one peer

        for _ in range(5):
            a.local_update("c", ObjectType.COUNTER, CounterAdd(1))

        b2 = ReplicaService(
            "B", listen=f"127.0.0.1:{p2}", peers=[f"127.0.0.1:{p1}"],
            data_dir=str(tmp_path / "b"), sync_interval=0.1, recover_state=True,
        ).start()
        try:
            assert b2.access("c", ObjectType.COUNTER).value >= 10  # recovered state
            assert converge([a, b2])
            assert a.access("c", ObjectType.COUNTER).value == 15
        finally:
            b2.stop()
    finally:
        a.stop()


def test_malformed_frame_is_connection_fatal_but_state_safe(tmp_path):
    port = free_port()
    a = ReplicaService(
        "A", listen=f"127.0.0.1:{port}", data_dir=str(tmp_path / "a"), sync_interval=0.1
    ).start()
    try:
        a.local_update("c", ObjectType.COUNTER, CounterAdd(9))
        digest = a.digest()
        sock = socket.create_connection(("127.0.0.1", port), timeout=2)
        sock.sendall(b"XXXXGARBAGE-NOT-A-FRAME")
        time.sleep(0.3)
        # the service closed the bad connection; its state is intact
        assert a.digest() == digest
        sock2 = socket.create_connection(("127.0.0.1", port), timeout=2)
        got = sock2.recv(10, socket.MSG_WAITALL)  # anti-entropy frame header
        assert got[:4] == b"HRM1"
        sock2.close()
        sock.close()
    finally:
        a.stop()
