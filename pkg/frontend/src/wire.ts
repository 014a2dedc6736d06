/**
 * Wire format: big-endian fixed-width primitives, length-prefixed
 * strings/bytes, fixed field order.  Mirrors the shared format exactly;
 * golden vectors under testdata/cdf pin every byte.
 *
 * 64-bit integers are bigints end to end: sequence numbers and clocks
 * may exceed Number.MAX_SAFE_INTEGER.
 */

export const MAGIC = Buffer.from("HRM1", "ascii");
export const WIRE_VERSION = 1;
export const DEFAULT_FRAME_CAP = 64 * 1024 * 1024;

export const MSG_SYNC = 0x01;
export const MSG_PLUGIN_EVENT = 0x10;
export const MSG_PLUGIN_CMD = 0x11;
export const MSG_PLUGIN_ERR = 0x12;
export const MSG_PLUGIN_HELLO = 0x13;
const KNOWN_MSG_TYPES = new Set([
  MSG_SYNC,
  MSG_PLUGIN_EVENT,
  MSG_PLUGIN_CMD,
  MSG_PLUGIN_ERR,
  MSG_PLUGIN_HELLO,
]);

export class DecodeError extends Error {}
export class FrameError extends DecodeError {}

export const OpKind = {
  CounterAdd: 0x01,
  SetAdd: 0x03,
  SetRemove: 0x04,
  MapPut: 0x05,
  MapRemoveKey: 0x06,
  MapCounterAdd: 0x07,
  MapSetAdd: 0x08,
  MapSetRemove: 0x09,
  Reset: 0x0f,
} as const;

export type Scalar =
  | { kind: "int"; value: bigint }
  | { kind: "float"; value: number }
  | { kind: "bool"; value: boolean }
  | { kind: "string"; value: string }
  | { kind: "bytes"; value: Buffer };

export interface UpdateId {
  replicaId: string;
  seq: bigint;
}

export type Op =
  | { kind: "counter_add"; delta: bigint }
  | { kind: "set_add"; element: Buffer }
  | { kind: "set_remove"; element: Buffer; observed: UpdateId[] }
  | { kind: "map_put"; key: string; value: Scalar }
  | { kind: "map_remove_key"; key: string }
  | { kind: "map_counter_add"; key: string; delta: bigint }
  | { kind: "map_set_add"; key: string; element: Buffer }
  | { kind: "map_set_remove"; key: string; element: Buffer; observed: UpdateId[] }
  | { kind: "reset"; newEpoch: bigint; snapshot: Buffer };

export interface Update {
  replicaId: string;
  seq: bigint;
  lamport: bigint;
  epoch: bigint;
  objectId: string;
  objectType: number; // 0 store-wide (reset), 1 counter, 2 set, 3 map
  op: Op;
}

export interface SyncMessage {
  sender: string;
  senderEpoch: bigint;
  versionVector: Array<[string, bigint]>;
  updates: Update[];
}

// ---------------------------------------------------------------------------

export class Writer {
  private parts: Buffer[] = [];

  u8(v: number): this {
    this.parts.push(Buffer.from([v]));
    return this;
  }

  u16(v: number): this {
    const b = Buffer.allocUnsafe(2);
    b.writeUInt16BE(v);
    this.parts.push(b);
    return this;
  }

  u32(v: number): this {
    const b = Buffer.allocUnsafe(4);
    b.writeUInt32BE(v);
    this.parts.push(b);
    return this;
  }

  u64(v: bigint): this {
    const b = Buffer.allocUnsafe(8);
    b.writeBigUInt64BE(BigInt.asUintN(64, v));
    this.parts.push(b);
    return this;
  }

  i64(v: bigint): this {
    const b = Buffer.allocUnsafe(8);
    b.writeBigInt64BE(BigInt.asIntN(64, v));
    this.parts.push(b);
    return this;
  }

  f64(v: number): this {
    const b = Buffer.allocUnsafe(8);
    b.writeDoubleBE(v);
    this.parts.push(b);
    return this;
  }

  bytes(v: Buffer): this {
    this.u32(v.length);
    this.parts.push(v);
    return this;
  }

  str(v: string): this {
    return this.bytes(Buffer.from(v, "utf8"));
  }

  raw(v: Buffer): this {
    this.parts.push(v);
    return this;
  }

  done(): Buffer {
    return Buffer.concat(this.parts);
  }
}

export class Reader {
  pos = 0;

  constructor(private data: Buffer) {}

  private need(n: number): number {
    if (this.pos + n > this.data.length) {
      throw new DecodeError(`truncated: need ${n} bytes at ${this.pos}`);
    }
    const at = this.pos;
    this.pos += n;
    return at;
  }

  u8(): number {
    return this.data[this.need(1)];
  }

  u16(): number {
    return this.data.readUInt16BE(this.need(2));
  }

  u32(): number {
    return this.data.readUInt32BE(this.need(4));
  }

  u64(): bigint {
    return this.data.readBigUInt64BE(this.need(8));
  }

  i64(): bigint {
    return this.data.readBigInt64BE(this.need(8));
  }

  f64(): number {
    return this.data.readDoubleBE(this.need(8));
  }

  bytes(): Buffer {
    const n = this.u32();
    const at = this.need(n);
    return Buffer.from(this.data.subarray(at, at + n));
  }

  str(): string {
    const raw = this.bytes();
    const text = raw.toString("utf8");
    if (Buffer.compare(Buffer.from(text, "utf8"), raw) !== 0) {
      throw new DecodeError("invalid UTF-8 string");
    }
    return text;
  }

  finish(): void {
    if (this.pos !== this.data.length) {
      throw new DecodeError(`${this.data.length - this.pos} trailing bytes`);
    }
  }
}

// ---------------------------------------------------------------------------
// Scalars

const SCALAR_INT = 0x01;
const SCALAR_FLOAT = 0x02;
const SCALAR_BOOL = 0x03;
const SCALAR_STR = 0x04;
const SCALAR_BYTES = 0x05;

export function writeScalar(w: Writer, s: Scalar): void {
  switch (s.kind) {
    case "int":
      w.u8(SCALAR_INT).i64(s.value);
      break;
    case "float":
      w.u8(SCALAR_FLOAT).f64(s.value);
      break;
    case "bool":
      w.u8(SCALAR_BOOL).u8(s.value ? 1 : 0);
      break;
    case "string":
      w.u8(SCALAR_STR).str(s.value);
      break;
    case "bytes":
      w.u8(SCALAR_BYTES).bytes(s.value);
      break;
  }
}

export function readScalar(r: Reader): Scalar {
  const tag = r.u8();
  switch (tag) {
    case SCALAR_INT:
      return { kind: "int", value: r.i64() };
    case SCALAR_FLOAT: {
      const value = r.f64();
      if (!Number.isFinite(value)) throw new DecodeError("non-finite float");
      if (value === 0 && Object.is(value, -0)) {
        throw new DecodeError("non-canonical negative zero");
      }
      return { kind: "float", value };
    }
    case SCALAR_BOOL: {
      const b = r.u8();
      if (b > 1) throw new DecodeError(`bad bool byte ${b}`);
      return { kind: "bool", value: b === 1 };
    }
    case SCALAR_STR:
      return { kind: "string", value: r.str() };
    case SCALAR_BYTES:
      return { kind: "bytes", value: r.bytes() };
    default:
      throw new DecodeError(`unknown scalar tag ${tag}`);
  }
}

// ---------------------------------------------------------------------------
// Updates

function writeUpdateId(w: Writer, id: UpdateId): void {
  w.str(id.replicaId).u64(id.seq);
}

function readUpdateId(r: Reader): UpdateId {
  const replicaId = r.str();
  return { replicaId, seq: r.u64() };
}

export function encodeUpdate(u: Update): Buffer {
  const w = new Writer();
  w.str(u.replicaId).u64(u.seq).u64(u.lamport).u64(u.epoch);
  w.str(u.objectId).u8(u.objectType);
  const op = u.op;
  switch (op.kind) {
    case "counter_add":
      w.u8(OpKind.CounterAdd).i64(op.delta);
      break;
    case "set_add":
      w.u8(OpKind.SetAdd).bytes(op.element);
      break;
    case "set_remove":
      w.u8(OpKind.SetRemove).bytes(op.element).u32(op.observed.length);
      for (const tag of op.observed) writeUpdateId(w, tag);
      break;
    case "map_put":
      w.u8(OpKind.MapPut).str(op.key);
      writeScalar(w, op.value);
      break;
    case "map_remove_key":
      w.u8(OpKind.MapRemoveKey).str(op.key);
      break;
    case "map_counter_add":
      w.u8(OpKind.MapCounterAdd).str(op.key).i64(op.delta);
      break;
    case "map_set_add":
      w.u8(OpKind.MapSetAdd).str(op.key).bytes(op.element);
      break;
    case "map_set_remove":
      w.u8(OpKind.MapSetRemove).str(op.key).bytes(op.element).u32(op.observed.length);
      for (const tag of op.observed) writeUpdateId(w, tag);
      break;
    case "reset":
      w.u8(OpKind.Reset).u64(op.newEpoch).bytes(op.snapshot);
      break;
  }
  return w.done();
}

const LEGAL_OPS: Record<number, number[]> = {
  0: [OpKind.Reset],
  1: [OpKind.CounterAdd],
  2: [OpKind.SetAdd, OpKind.SetRemove],
  3: [
    OpKind.MapPut,
    OpKind.MapRemoveKey,
    OpKind.MapCounterAdd,
    OpKind.MapSetAdd,
    OpKind.MapSetRemove,
  ],
};

export function readUpdate(r: Reader): Update {
  const replicaId = r.str();
  const seq = r.u64();
  const lamport = r.u64();
  const epoch = r.u64();
  const objectId = r.str();
  const objectType = r.u8();
  if (!(objectType in LEGAL_OPS)) {
    throw new DecodeError(`unknown object type ${objectType}`);
  }
  const kind = r.u8();
  if (!LEGAL_OPS[objectType].includes(kind)) {
    throw new DecodeError(`op ${kind} illegal for object type ${objectType}`);
  }
  let op: Op;
  switch (kind) {
    case OpKind.CounterAdd:
      op = { kind: "counter_add", delta: r.i64() };
      break;
    case OpKind.SetAdd:
      op = { kind: "set_add", element: r.bytes() };
      break;
    case OpKind.SetRemove: {
      const element = r.bytes();
      const observed = Array.from({ length: r.u32() }, () => readUpdateId(r));
      op = { kind: "set_remove", element, observed };
      break;
    }
    case OpKind.MapPut: {
      const key = r.str();
      op = { kind: "map_put", key, value: readScalar(r) };
      break;
    }
    case OpKind.MapRemoveKey:
      op = { kind: "map_remove_key", key: r.str() };
      break;
    case OpKind.MapCounterAdd: {
      const key = r.str();
      op = { kind: "map_counter_add", key, delta: r.i64() };
      break;
    }
    case OpKind.MapSetAdd: {
      const key = r.str();
      op = { kind: "map_set_add", key, element: r.bytes() };
      break;
    }
    case OpKind.MapSetRemove: {
      const key = r.str();
      const element = r.bytes();
      const observed = Array.from({ length: r.u32() }, () => readUpdateId(r));
      op = { kind: "map_set_remove", key, element, observed };
      break;
    }
    case OpKind.Reset: {
      const newEpoch = r.u64();
      if (newEpoch === 0n) throw new DecodeError("Reset.new_epoch must be > 0");
      if (epoch !== newEpoch) throw new DecodeError("Reset must carry its epoch");
      op = { kind: "reset", newEpoch, snapshot: r.bytes() };
      break;
    }
    default:
      throw new DecodeError(`unknown op kind ${kind}`);
  }
  return { replicaId, seq, lamport, epoch, objectId, objectType, op };
}

export function decodeUpdate(data: Buffer): Update {
  const r = new Reader(data);
  const u = readUpdate(r);
  r.finish();
  return u;
}

// ---------------------------------------------------------------------------
// Frames

export function encodeFrame(msgType: number, payload: Buffer): Buffer {
  const header = Buffer.allocUnsafe(10);
  MAGIC.copy(header, 0);
  header[4] = WIRE_VERSION;
  header[5] = msgType;
  header.writeUInt32BE(payload.length, 6);
  return Buffer.concat([header, payload]);
}

/** Decode one frame at `offset`; null means feed more bytes. */
export function decodeFrame(
  data: Buffer,
  offset = 0,
  maxLen = DEFAULT_FRAME_CAP,
): { msgType: number; payload: Buffer; end: number } | null {
  const avail = data.length - offset;
  const prefix = data.subarray(offset, offset + Math.min(4, avail));
  if (Buffer.compare(prefix, MAGIC.subarray(0, prefix.length)) !== 0) {
    throw new FrameError("bad magic");
  }
  if (avail < 10) return null;
  const version = data[offset + 4];
  if (version !== WIRE_VERSION) throw new FrameError(`unknown version ${version}`);
  const msgType = data[offset + 5];
  if (!KNOWN_MSG_TYPES.has(msgType)) throw new FrameError(`unknown msg_type ${msgType}`);
  const length = data.readUInt32BE(offset + 6);
  if (length > maxLen) throw new FrameError(`oversize frame (${length})`);
  const end = offset + 10 + length;
  if (data.length < end) return null;
  return { msgType, payload: Buffer.from(data.subarray(offset + 10, end)), end };
}

export class FrameBuffer {
  private buf = Buffer.alloc(0);

  constructor(private maxLen = DEFAULT_FRAME_CAP) {}

  feed(data: Buffer): void {
    this.buf = this.buf.length === 0 ? Buffer.from(data) : Buffer.concat([this.buf, data]);
  }

  next(): { msgType: number; payload: Buffer } | null {
    const got = decodeFrame(this.buf, 0, this.maxLen);
    if (got === null) return null;
    this.buf = Buffer.from(this.buf.subarray(got.end));
    return { msgType: got.msgType, payload: got.payload };
  }
}

// ---------------------------------------------------------------------------
// Sync messages

export function updateSortKey(u: { replicaId: string; seq: bigint }): [Buffer, bigint] {
  return [Buffer.from(u.replicaId, "utf8"), u.seq];
}

export function compareSortKeys(a: [Buffer, bigint], b: [Buffer, bigint]): number {
  const byRid = Buffer.compare(a[0], b[0]);
  if (byRid !== 0) return byRid;
  return a[1] < b[1] ? -1 : a[1] > b[1] ? 1 : 0;
}

export function encodeSync(m: SyncMessage): Buffer {
  const w = new Writer();
  w.str(m.sender).u64(m.senderEpoch);
  const vv = [...m.versionVector].sort((a, b) =>
    Buffer.compare(Buffer.from(a[0], "utf8"), Buffer.from(b[0], "utf8")),
  );
  w.u32(vv.length);
  for (const [rid, maxSeq] of vv) w.str(rid).u64(maxSeq);
  const updates = [...m.updates].sort((a, b) =>
    compareSortKeys(updateSortKey(a), updateSortKey(b)),
  );
  w.u32(updates.length);
  for (const u of updates) w.raw(encodeUpdate(u));
  return w.done();
}

// ---------------------------------------------------------------------------
// Plug-in protocol payloads (decoded only for conformance; the secondary
// replica hosts no plug-ins)

export interface PluginHello {
  pluginId: string;
  schemaVersion: number;
}

export interface PluginEvent {
  eventSeq: bigint;
  coreFunction: string;
  replicaId: string;
  update: Update | null;
  resultView: Buffer;
}

export interface PluginCommand {
  cmdSeq: bigint;
  coreFunction: string;
  args: Buffer;
}

export interface PluginErrorMsg {
  refSeq: bigint;
  code: number;
  message: string;
}

export function decodeHello(data: Buffer): PluginHello {
  const r = new Reader(data);
  const hello = { pluginId: r.str(), schemaVersion: r.u32() };
  r.finish();
  return hello;
}

export function encodeHello(h: PluginHello): Buffer {
  return new Writer().str(h.pluginId).u32(h.schemaVersion).done();
}

export function decodeEvent(data: Buffer): PluginEvent {
  const r = new Reader(data);
  const eventSeq = r.u64();
  const coreFunction = r.str();
  const replicaId = r.str();
  const update = r.u8() === 1 ? readUpdate(r) : null;
  const resultView = r.bytes();
  r.finish();
  return { eventSeq, coreFunction, replicaId, update, resultView };
}

export function encodeEvent(e: PluginEvent): Buffer {
  const w = new Writer().u64(e.eventSeq).str(e.coreFunction).str(e.replicaId);
  if (e.update === null) w.u8(0);
  else w.u8(1).raw(encodeUpdate(e.update));
  return w.bytes(e.resultView).done();
}

export function decodeCommand(data: Buffer): PluginCommand {
  const r = new Reader(data);
  const cmd = { cmdSeq: r.u64(), coreFunction: r.str(), args: r.bytes() };
  r.finish();
  return cmd;
}

export function encodeCommand(c: PluginCommand): Buffer {
  return new Writer().u64(c.cmdSeq).str(c.coreFunction).bytes(c.args).done();
}

export function decodePluginError(data: Buffer): PluginErrorMsg {
  const r = new Reader(data);
  const err = { refSeq: r.u64(), code: r.u16(), message: r.str() };
  r.finish();
  return err;
}

export function encodePluginError(e: PluginErrorMsg): Buffer {
  return new Writer().u64(e.refSeq).u16(e.code).str(e.message).done();
}

export function decodeSync(data: Buffer): SyncMessage {
  const r = new Reader(data);
  const sender = r.str();
  const senderEpoch = r.u64();
  const vv: Array<[string, bigint]> = [];
  let prevRid: Buffer | null = null;
  for (let i = 0, n = r.u32(); i < n; i++) {
    const rid = r.str();
    const seq = r.u64();
    const ridBytes = Buffer.from(rid, "utf8");
    if (prevRid !== null && Buffer.compare(ridBytes, prevRid) <= 0) {
      throw new DecodeError("version vector not sorted/unique");
    }
    prevRid = ridBytes;
    vv.push([rid, seq]);
  }
  const updates: Update[] = [];
  let prevKey: [Buffer, bigint] | null = null;
  for (let i = 0, n = r.u32(); i < n; i++) {
    const u = readUpdate(r);
    const key = updateSortKey(u);
    if (prevKey !== null && compareSortKeys(key, prevKey) <= 0) {
      throw new DecodeError("updates not sorted/unique");
    }
    prevKey = key;
    updates.push(u);
  }
  r.finish();
  return { sender, senderEpoch, versionVector: vv, updates };
}
