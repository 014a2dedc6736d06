#!/usr/bin/env node
/**
 * interop-replica CLI.
 *
 *   run --id P --listen 7005 --peers host:port[,host:port] \
 *       [--ops N] [--sync-ms 200] [--report-ms 500] [--workload file]
 *       performs the workload, syncs periodically, and prints
 *       "digest <hex>" lines until terminated
 *   conformance --vectors DIR   golden-vector suite; exit 0 iff all pass
 *   empty-digest                digest of the empty state
 */

import fs from "node:fs";
import { Replica } from "./replica.js";
import { Peer, parseAddress } from "./peer.js";
import { checkVectors } from "./conformance.js";
import { nextOp, rng } from "./workload.js";
import { decodeUpdate } from "./wire.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (argv[i].startsWith("--")) {
      const key = argv[i].slice(2);
      const value = i + 1 < argv.length && !argv[i + 1].startsWith("--") ? argv[++i] : "true";
      args.set(key, value);
    }
  }
  return args;
}

async function cmdRun(args: Map<string, string>): Promise<number> {
  const id = args.get("id") ?? "TS";
  const listen = args.has("listen")
    ? Number(args.get("listen")!.replace(/^.*:/, ""))
    : null;
  const peers = (args.get("peers") ?? "")
    .split(",")
    .filter((p) => p.length > 0)
    .map(parseAddress);
  const ops = Number(args.get("ops") ?? "0");
  const syncMs = Number(args.get("sync-ms") ?? "200");
  const reportMs = Number(args.get("report-ms") ?? "500");
  const seed = Number(args.get("seed") ?? "1");

  const replica = new Replica(id);
  const peer = new Peer(replica, listen, peers);
  await peer.start();

  const workloadFile = args.get("workload");
  if (workloadFile !== undefined) {
    // workload file: one CDF-encoded update per line, hex
    for (const line of fs.readFileSync(workloadFile, "utf8").split("\n")) {
      const hex = line.trim();
      if (hex) replica.applyUpdate(decodeUpdate(Buffer.from(hex, "hex")));
    }
  }

  const rand = rng(seed);
  let issued = 0;
  const opTimer = setInterval(() => {
    for (let burst = 0; burst < 10 && issued < ops; burst++, issued++) {
      const [objectId, objectType, op] = nextOp(replica, rand);
      replica.localUpdate(objectId, objectType, op);
    }
    if (issued >= ops) clearInterval(opTimer);
  }, 2);

  const syncTimer = setInterval(() => peer.broadcast(), syncMs);
  const reportTimer = setInterval(() => {
    console.log(`digest ${replica.digest()}`);
  }, reportMs);

  await new Promise<void>((resolve) => {
    const quit = () => resolve();
    process.on("SIGTERM", quit);
    process.on("SIGINT", quit);
  });
  clearInterval(opTimer);
  clearInterval(syncTimer);
  clearInterval(reportTimer);
  peer.broadcast();
  console.log(`digest ${replica.digest()}`);
  peer.stop();
  return 0;
}

function cmdConformance(args: Map<string, string>): number {
  const vectors = args.get("vectors");
  if (vectors === undefined) {
    console.error("conformance requires --vectors DIR");
    return 2;
  }
  const report = checkVectors(vectors);
  for (const failure of report.failures) console.log(`FAIL ${failure}`);
  if (report.warning) console.log(`WARN ${report.warning}`);
  console.log(
    `conformance: ${report.checked - report.failures.length}/${report.checked} vectors pass`,
  );
  return report.failures.length === 0 ? 0 : 1;
}

async function main(): Promise<number> {
  let [command, ...rest] = process.argv.slice(2);
  if (command !== undefined && command.startsWith("--")) {
    // bare flag form: `interop-replica --id P --listen :7005 --peers …`
    rest = [command, ...rest];
    command = "run";
  }
  const args = parseArgs(rest);
  switch (command) {
    case "run":
      return cmdRun(args);
    case "conformance":
      return cmdConformance(args);
    case "empty-digest":
      console.log(new Replica("probe").digest());
      return 0;
    default:
      console.error("usage: interop-replica run|conformance|empty-digest [options]");
      return 2;
  }
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(err);
    process.exit(1);
  },
);
