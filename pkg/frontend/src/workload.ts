/** Seeded mixed workload: counter deltas, set add/remove (observing the
 * replica's live tags), map puts and nested counter adds. */

import { Op } from "./wire.js";
import { Replica } from "./replica.js";
import { SetState, MapState } from "./state.js";

// mulberry32: small deterministic PRNG, good enough for workload shaping
export function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function nextOp(replica: Replica, rand: () => number): [string, number, Op] {
  const roll = rand();
  if (roll < 0.4) {
    const delta = BigInt(Math.floor(rand() * 19) - 9);
    return ["c", 1, { kind: "counter_add", delta }];
  }
  if (roll < 0.6) {
    const element = Buffer.from([Math.floor(rand() * 8)]);
    return ["s", 2, { kind: "set_add", element }];
  }
  if (roll < 0.7) {
    const element = Buffer.from([Math.floor(rand() * 8)]);
    const state = replica.store.get("s", 2) as SetState | undefined;
    const observed = [];
    if (state !== undefined) {
      for (const tag of state.live.values()) {
        if (Buffer.compare(tag.element, element) === 0) observed.push(tag.id);
      }
    }
    return ["s", 2, { kind: "set_remove", element, observed }];
  }
  if (roll < 0.85) {
    const key = `k${Math.floor(rand() * 6)}`;
    return [
      "m",
      3,
      { kind: "map_put", key, value: { kind: "int", value: BigInt(Math.floor(rand() * 1000)) } },
    ];
  }
  const key = `k${Math.floor(rand() * 6)}`;
  return ["m", 3, { kind: "map_counter_add", key, delta: 1n }];
}
