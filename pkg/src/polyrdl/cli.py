"""Command-line entry points: bench ladders, scenario runs, and the
long-running replica service."""

from __future__ import annotations

import argparse
import signal
import sys
import time

from .bench import BenchConfig, bench_run, format_table, write_csv
from .scenario import Scenario, run_scenario


def _cmd_bench(args) -> int:
    config = BenchConfig(
        types=tuple(args.types.split(",")),
        op_counts=tuple(int(n) for n in args.ops.split(",")),
        reps=args.reps,
        seed=args.seed,
    )
    rows = bench_run(config)
    write_csv(rows, args.out)
    print(format_table(rows))
    print(f"wrote {args.out}")
    return 0


def _cmd_sim(args) -> int:
    if args.scenario:
        with open(args.scenario, "r", encoding="utf-8") as f:
            scenario = Scenario.from_json(f.read())
        if args.seed is not None:
            scenario.seed = args.seed
    else:
        scenario = Scenario(seed=args.seed if args.seed is not None else 0, op_count=args.ops)
    result = run_scenario(scenario)
    print(f"replicas converged: {result.converged}")
    print(f"digest: {result.oracle}")
    print(f"updates: {result.updates_total}  frames delivered: {result.delivered}")
    print(f"trace hash: {result.trace_hash}")
    return 0 if result.converged else 1


def _cmd_replica(args) -> int:
    from .plugin_manager import PluginManager
    from .service import ReplicaService

    plugins = None
    if args.plugins:
        plugins = PluginManager()
    service = ReplicaService(
        replica_id=args.id,
        listen=args.listen,
        peers=args.peers.split(",") if args.peers else [],
        data_dir=args.data_dir,
        plugins=plugins,
        sync_interval=args.sync_interval,
        recover_state=args.recover,
    ).start()
    if plugins is not None:
        metas = args.plugins.split(",")
        ids = []
        for meta in metas:
            import json

            with open(meta, "r", encoding="utf-8") as f:
                ids.append(json.load(f).get("plugin_id", meta))
        report = plugins.integrate_plugins(ids, metas)
        for pid, item in report.items():
            print(f"plugin {pid}: {item.status} {item.detail}", flush=True)

    stop = {"flag": False}

    def _sig(_signum, _frame):
        stop["flag"] = True

    signal.signal(signal.SIGINT, _sig)
    signal.signal(signal.SIGTERM, _sig)
    print(f"replica {args.id} listening on {args.listen}", flush=True)
    started = time.time()
    while not stop["flag"]:
        time.sleep(0.2)
        if args.duration and time.time() - started >= args.duration:
            break
    digest = service.digest().hex()
    service.stop()
    print(f"digest {digest}", flush=True)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="polyrdl")
    sub = parser.add_subparsers(dest="command", required=True)

    p_bench = sub.add_parser("bench", help="run the benchmark ladder")
    p_bench.add_argument("--types", default="counter,set,map")
    p_bench.add_argument("--ops", default="100,1000,10000")
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.add_argument("--seed", type=int, default=1)
    p_bench.add_argument("--out", default="bench.csv")
    p_bench.set_defaults(func=_cmd_bench)

    p_sim = sub.add_parser("sim", help="run a deterministic scenario")
    p_sim.add_argument("--scenario", help="scenario JSON file")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--ops", type=int, default=300)
    p_sim.set_defaults(func=_cmd_sim)

    p_rep = sub.add_parser("replica", help="run a replica service")
    p_rep.add_argument("--id", required=True)
    p_rep.add_argument("--listen", required=True)
    p_rep.add_argument("--peers", default="")
    p_rep.add_argument("--data-dir", default=None)
    p_rep.add_argument("--plugins", default="", help="comma-separated metadata JSON paths")
    p_rep.add_argument("--sync-interval", type=float, default=1.0)
    p_rep.add_argument("--duration", type=float, default=0.0, help="exit after N seconds")
    p_rep.add_argument("--recover", action="store_true", help="recover state from --data-dir")
    p_rep.set_defaults(func=_cmd_replica)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
