/** Golden-vector checks: decode, re-encode, compare byte-for-byte; then
 * replay scripted update sets and compare digests. */

import fs from "node:fs";
import path from "node:path";
import {
  MSG_PLUGIN_CMD,
  MSG_PLUGIN_ERR,
  MSG_PLUGIN_EVENT,
  MSG_PLUGIN_HELLO,
  MSG_SYNC,
  decodeCommand,
  decodeEvent,
  decodeFrame,
  decodeHello,
  decodePluginError,
  decodeSync,
  decodeUpdate,
  encodeCommand,
  encodeEvent,
  encodeFrame,
  encodeHello,
  encodePluginError,
  encodeSync,
} from "./wire.js";
import { Replica } from "./replica.js";

export interface ConformanceReport {
  checked: number;
  failures: string[];
  warning?: string;
}

function reencode(msgType: number, payload: Buffer): Buffer {
  switch (msgType) {
    case MSG_SYNC:
      return encodeSync(decodeSync(payload));
    case MSG_PLUGIN_HELLO:
      return encodeHello(decodeHello(payload));
    case MSG_PLUGIN_EVENT:
      return encodeEvent(decodeEvent(payload));
    case MSG_PLUGIN_CMD:
      return encodeCommand(decodeCommand(payload));
    case MSG_PLUGIN_ERR:
      return encodePluginError(decodePluginError(payload));
    default:
      throw new Error(`unknown msg type ${msgType}`);
  }
}

export function checkVectors(vectorsDir: string): ConformanceReport {
  const report: ConformanceReport = { checked: 0, failures: [] };
  const cdfDir = path.join(vectorsDir, "cdf");
  const frameNames = fs.existsSync(cdfDir)
    ? fs.readdirSync(cdfDir).filter((n) => n.endsWith(".hex")).sort()
    : [];
  if (frameNames.length === 0) {
    report.warning = "no frame vectors found";
  }
  for (const name of frameNames) {
    report.checked += 1;
    try {
      const raw = Buffer.from(
        fs.readFileSync(path.join(cdfDir, name), "ascii").trim(),
        "hex",
      );
      const frame = decodeFrame(raw);
      if (frame === null || frame.end !== raw.length) {
        report.failures.push(`${name}: incomplete frame`);
        continue;
      }
      const again = encodeFrame(frame.msgType, reencode(frame.msgType, frame.payload));
      if (Buffer.compare(again, raw) !== 0) {
        report.failures.push(`${name}: re-encode differs`);
      }
    } catch (err) {
      report.failures.push(`${name}: ${(err as Error).message}`);
    }
  }

  const digestDir = path.join(vectorsDir, "digests");
  const caseNames = fs.existsSync(digestDir)
    ? fs.readdirSync(digestDir).filter((n) => n.endsWith(".json")).sort()
    : [];
  for (const name of caseNames) {
    report.checked += 1;
    try {
      const scripted = JSON.parse(
        fs.readFileSync(path.join(digestDir, name), "utf8"),
      ) as { updates: string[]; expected_digest: string };
      const replica = new Replica("conformance");
      for (const hex of scripted.updates) {
        replica.applyUpdate(decodeUpdate(Buffer.from(hex, "hex")));
      }
      if (replica.digest() !== scripted.expected_digest) {
        report.failures.push(
          `${name}: digest ${replica.digest()} != ${scripted.expected_digest}`,
        );
      }
    } catch (err) {
      report.failures.push(`${name}: ${(err as Error).message}`);
    }
  }
  return report;
}
