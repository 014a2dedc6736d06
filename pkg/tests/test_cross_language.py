"""Cross-language convergence: one primary replica and one secondary
(TypeScript) replica exchanging sync frames over loopback TCP.

These tests skip cleanly when the secondary is not built, so the primary
suite stands alone.  Build it with `npm install && npm run build` in
frontend/.
"""

import os
import random
import re
import signal
import subprocess
import time

import pytest

from polyrdl.model import CounterAdd, MapCounterAdd, MapPut, ObjectType, SetAdd, SetRemove
from polyrdl.service import ReplicaService

from plugin_harness import free_port, wait_for

ROOT = os.path.join(os.path.dirname(__file__), "..")
FRONTEND_CLI = os.path.join(ROOT, "frontend", "dist", "cli.js")
TESTDATA = os.path.join(ROOT, "testdata")

needs_frontend = pytest.mark.skipif(
    not os.path.exists(FRONTEND_CLI), reason="secondary component not built"
)


def run_conformance():
    """-> (ok, detail) from the secondary's golden-vector checker."""
    proc = subprocess.run(
        ["node", FRONTEND_CLI, "conformance", "--vectors", TESTDATA],
        capture_output=True,
        text=True,
        timeout=120,
    )
    detail = (proc.stdout.strip().splitlines() or ["no output"])[-1]
    return proc.returncode == 0, detail


def _python_workload(service, ops_each, rng):
    for i in range(ops_each):
        roll = rng.random()
        if roll < 0.4:
            service.local_update("c", ObjectType.COUNTER, CounterAdd(rng.randint(-9, 9)))
        elif roll < 0.6:
            service.local_update("s", ObjectType.SET, SetAdd(bytes([rng.randint(0, 7)])))
        elif roll < 0.7:
            element = bytes([rng.randint(0, 7)])

            def observed_tags(n, e=element):
                state = n.replica.store.get("s", ObjectType.SET)
                return tuple(state.live.get(e, {})) if state else ()

            observed = service.call(observed_tags)
            service.local_update("s", ObjectType.SET, SetRemove(element, observed))
        elif roll < 0.85:
            service.local_update("m", ObjectType.MAP, MapPut(f"k{rng.randint(0, 5)}", i))
        else:
            service.local_update("m", ObjectType.MAP, MapCounterAdd(f"k{rng.randint(0, 5)}", 1))
        if i % 50 == 0:
            time.sleep(0.01)


def run_cross_language_convergence(tmp_path, ops_each=500):
    """-> the converged digest hex; raises on divergence/timeout."""
    py_port, js_port = free_port(), free_port()
    service = ReplicaService(
        "PY",
        listen=f"127.0.0.1:{py_port}",
        peers=[f"127.0.0.1:{js_port}"],
        sync_interval=0.1,
    ).start()
    proc = subprocess.Popen(
        [
            "node",
            FRONTEND_CLI,
            "run",
            "--id", "TS",
            "--listen", str(js_port),
            "--peers", f"127.0.0.1:{py_port}",
            "--ops", str(ops_each),
            "--sync-ms", "100",
            "--report-ms", "200",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    last_js_digest = {"hex": None}

    def reader():
        for line in proc.stdout:
            m = re.match(r"digest ([0-9a-f]{64})", line.strip())
            if m:
                last_js_digest["hex"] = m.group(1)

    import threading

    threading.Thread(target=reader, daemon=True).start()
    try:
        rng = random.Random(11)
        _python_workload(service, ops_each, rng)

        def matched():
            js = last_js_digest["hex"]
            return js is not None and service.digest().hex() == js

        assert wait_for(matched, timeout=60, interval=0.2), (
            f"no convergence: py={service.digest().hex()} js={last_js_digest['hex']}"
        )
        return service.digest().hex()
    finally:
        proc.send_signal(signal.SIGTERM)
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
        service.stop()


@needs_frontend
def test_conformance_suite_passes():
    ok, detail = run_conformance()
    assert ok, detail


@needs_frontend
def test_cross_language_concurrent_convergence(tmp_path):
    digest = run_cross_language_convergence(tmp_path, ops_each=500)
    assert len(digest) == 64


@needs_frontend
def test_empty_secondary_digest_matches_primary_empty():
    from polyrdl.replica import Replica

    proc = subprocess.run(
        ["node", FRONTEND_CLI, "empty-digest"],
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == Replica("X").state_digest().hex()
