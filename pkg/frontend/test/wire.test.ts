import { describe, expect, it } from "vitest";
import fs from "node:fs";
import path from "node:path";
import {
  decodeFrame,
  decodeSync,
  decodeUpdate,
  encodeFrame,
  encodeSync,
  encodeUpdate,
  DecodeError,
  FrameError,
  Update,
} from "../src/wire.js";
import { checkVectors } from "../src/conformance.js";

const TESTDATA = path.join(__dirname, "..", "..", "testdata");

describe("frame codec", () => {
  it("encodes the empty sync frame to the pinned bytes", () => {
    expect(encodeFrame(0x01, Buffer.alloc(0)).toString("hex")).toBe(
      "48524d31010100000000",
    );
  });

  it("rejects bad magic", () => {
    expect(() => decodeFrame(Buffer.from("XXXXxxxxxxxxxx"))).toThrow(FrameError);
  });

  it("returns null on a partial frame", () => {
    const frame = encodeFrame(0x01, Buffer.from("abc"));
    expect(decodeFrame(frame.subarray(0, 7))).toBeNull();
  });

  it("decodes two concatenated frames with zero residue", () => {
    const stream = Buffer.concat([
      encodeFrame(0x01, Buffer.from("one")),
      encodeFrame(0x10, Buffer.from("two")),
    ]);
    const first = decodeFrame(stream)!;
    const second = decodeFrame(stream, first.end)!;
    expect(first.payload.toString()).toBe("one");
    expect(second.payload.toString()).toBe("two");
    expect(second.end).toBe(stream.length);
  });
});

describe("update codec", () => {
  const sample: Update = {
    replicaId: "A",
    seq: 1n,
    lamport: 1n,
    epoch: 0n,
    objectId: "c",
    objectType: 1,
    op: { kind: "counter_add", delta: 5n },
  };

  it("matches the hand-pinned layout", () => {
    expect(encodeUpdate(sample).toString("hex")).toBe(
      "0000000141" +
        "0000000000000001" +
        "0000000000000001" +
        "0000000000000000" +
        "0000000163" +
        "01" +
        "01" +
        "0000000000000005",
    );
  });

  it("round-trips", () => {
    const decoded = decodeUpdate(encodeUpdate(sample));
    expect(encodeUpdate(decoded).equals(encodeUpdate(sample))).toBe(true);
  });

  it("rejects truncation and trailing bytes", () => {
    const encoded = encodeUpdate(sample);
    expect(() => decodeUpdate(encoded.subarray(0, encoded.length - 1))).toThrow(
      DecodeError,
    );
    expect(() => decodeUpdate(Buffer.concat([encoded, Buffer.from([0])]))).toThrow(
      DecodeError,
    );
  });

  it("handles u64 values beyond Number range", () => {
    const big: Update = {
      ...sample,
      seq: 2n ** 63n,
      lamport: 2n ** 64n - 1n,
    };
    const decoded = decodeUpdate(encodeUpdate(big));
    expect(decoded.seq).toBe(2n ** 63n);
    expect(decoded.lamport).toBe(2n ** 64n - 1n);
  });
});

describe("sync codec", () => {
  it("rejects unsorted updates", () => {
    const u1 = encodeUpdate({
      replicaId: "B",
      seq: 1n,
      lamport: 1n,
      epoch: 0n,
      objectId: "c",
      objectType: 1,
      op: { kind: "counter_add", delta: 1n },
    });
    const u2 = encodeUpdate({
      replicaId: "A",
      seq: 1n,
      lamport: 1n,
      epoch: 0n,
      objectId: "c",
      objectType: 1,
      op: { kind: "counter_add", delta: 1n },
    });
    const msg = encodeSync({ sender: "A", senderEpoch: 0n, versionVector: [], updates: [] });
    // splice two out-of-order updates after rewriting the count
    const body = Buffer.concat([msg.subarray(0, msg.length - 4)]);
    const bad = Buffer.concat([
      body,
      Buffer.from([0, 0, 0, 2]),
      u1,
      u2,
    ]);
    expect(() => decodeSync(bad)).toThrow(DecodeError);
  });
});

describe("golden vectors", () => {
  it("the full conformance suite passes", () => {
    const report = checkVectors(TESTDATA);
    expect(report.failures).toEqual([]);
    expect(report.checked).toBeGreaterThanOrEqual(36);
  });

  it("a corrupted structural byte fails its vector, others still pass", () => {
    const cdfDir = path.join(TESTDATA, "cdf");
    const name = fs.readdirSync(cdfDir).filter((n) => n.endsWith(".hex")).sort()[1];
    const raw = Buffer.from(
      fs.readFileSync(path.join(cdfDir, name), "ascii").trim(),
      "hex",
    );
    raw[10] ^= 0xff; // first payload byte: a length prefix
    let failed = false;
    try {
      const tampered = decodeFrame(raw);
      const again = tampered && encodeSync(decodeSync(tampered.payload));
      failed = again === null || !encodeFrame(0x01, again).equals(raw);
    } catch {
      failed = true;
    }
    expect(failed).toBe(true);
    // the untampered suite still passes in full
    expect(checkVectors(TESTDATA).failures).toEqual([]);
  });

  it("an empty vector dir passes with a warning", () => {
    const report = checkVectors("/nonexistent-dir");
    expect(report.failures).toEqual([]);
    expect(report.warning).toBeTruthy();
  });
});
