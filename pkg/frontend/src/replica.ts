/** Replica: Lamport clock, update log, version vector, epoch gate. */

import {
  Op,
  SyncMessage,
  Update,
  decodeUpdate,
  encodeSync,
} from "./wire.js";
import { Store, applyOp, canonicalDecode, canonicalEncode, digestOf, compareStamps } from "./state.js";

export type ApplyResult = "applied" | "duplicate" | "stale_epoch";

class VersionVector {
  contiguous = new Map<string, bigint>();
  pending = new Map<string, Set<bigint>>();

  contains(replicaId: string, seq: bigint): boolean {
    if (seq <= (this.contiguous.get(replicaId) ?? 0n)) return true;
    return this.pending.get(replicaId)?.has(seq) ?? false;
  }

  record(replicaId: string, seq: bigint): void {
    let high = this.contiguous.get(replicaId) ?? 0n;
    if (seq <= high) return;
    let pend = this.pending.get(replicaId);
    if (pend === undefined) {
      pend = new Set();
      this.pending.set(replicaId, pend);
    }
    pend.add(seq);
    while (pend.has(high + 1n)) {
      high += 1n;
      pend.delete(high);
    }
    this.contiguous.set(replicaId, high);
    if (pend.size === 0) this.pending.delete(replicaId);
  }

  rebuild(entries: Array<[string, bigint]>): void {
    this.contiguous.clear();
    this.pending.clear();
    for (const [rid, seq] of entries) this.record(rid, seq);
  }

  sortedItems(): Array<[string, bigint]> {
    return [...this.contiguous.entries()].sort((a, b) =>
      Buffer.compare(Buffer.from(a[0], "utf8"), Buffer.from(b[0], "utf8")),
    );
  }
}

export class Replica {
  clock = 0n;
  epoch = 0n;
  nextSeq = 1n;
  store = new Store();
  log: Update[] = [];
  applied = new VersionVector();
  private currentResetStamp: { lamport: bigint; ridBytes: Buffer } | null = null;

  constructor(public replicaId: string) {
    if (!replicaId || Buffer.from(replicaId, "utf8").length > 64) {
      throw new Error("replica id must be nonempty and at most 64 bytes");
    }
  }

  localUpdate(objectId: string, objectType: number, op: Op): Update {
    this.clock += 1n;
    const u: Update = {
      replicaId: this.replicaId,
      seq: this.nextSeq,
      lamport: this.clock,
      epoch: op.kind === "reset" ? op.newEpoch : this.epoch,
      objectId,
      objectType,
      op,
    };
    this.nextSeq += 1n;
    const result = this.applyUpdate(u);
    if (result !== "applied") throw new Error(`local update not applied: ${result}`);
    return u;
  }

  applyUpdate(u: Update): ApplyResult {
    if (this.applied.contains(u.replicaId, u.seq)) return "duplicate";
    if (u.epoch < this.epoch) return "stale_epoch";
    if (u.op.kind === "reset") return this.applyReset(u);
    if (this.clock < u.lamport) this.clock = u.lamport;
    applyOp(this.store, u);
    this.log.push(u);
    this.applied.record(u.replicaId, u.seq);
    return "applied";
  }

  private applyReset(u: Update): ApplyResult {
    const op = u.op as Extract<Op, { kind: "reset" }>;
    const stamp = { lamport: u.lamport, ridBytes: Buffer.from(u.replicaId, "utf8") };
    if (
      op.newEpoch === this.epoch &&
      this.currentResetStamp !== null &&
      compareStamps(stamp, this.currentResetStamp) < 0
    ) {
      // concurrent reset that loses the tie-break: record, no effect
      if (this.clock < u.lamport) this.clock = u.lamport;
      this.log.push(u);
      this.applied.record(u.replicaId, u.seq);
      return "applied";
    }
    const newStore = canonicalDecode(op.snapshot);
    if (this.clock < u.lamport) this.clock = u.lamport;
    const retained = this.log.filter((x) => x.epoch >= op.newEpoch);
    this.epoch = op.newEpoch;
    this.store = newStore;
    this.log = [...retained, u];
    this.applied.rebuild(this.log.map((x) => [x.replicaId, x.seq]));
    for (const x of retained) {
      if (x.op.kind !== "reset") applyOp(this.store, x);
    }
    this.currentResetStamp = stamp;
    return "applied";
  }

  handleSync(m: SyncMessage): { applied: number; duplicates: number; stale: number } {
    const report = { applied: 0, duplicates: 0, stale: 0 };
    for (const u of m.updates) {
      const result = this.applyUpdate(u);
      if (result === "applied") report.applied += 1;
      else if (result === "duplicate") report.duplicates += 1;
      else report.stale += 1;
    }
    return report;
  }

  buildSync(): SyncMessage {
    return {
      sender: this.replicaId,
      senderEpoch: this.epoch,
      versionVector: this.applied.sortedItems(),
      updates: this.log,
    };
  }

  encodeSyncPayload(): Buffer {
    return encodeSync(this.buildSync());
  }

  digest(): string {
    return digestOf(this.store);
  }

  canonicalBytes(): Buffer {
    return canonicalEncode(this.store);
  }
}

export { decodeUpdate };
