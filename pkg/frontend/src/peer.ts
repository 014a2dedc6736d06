/**
 * TCP peer: single event loop, length-framed sync exchange.
 *
 * Every (re)connect, incoming or outgoing, starts with a full sync
 * broadcast (anti-entropy).  Decode errors are connection-fatal; the
 * dialer reconnects with exponential backoff from 100 ms up to 5 s.
 */

import net from "node:net";
import {
  FrameBuffer,
  DecodeError,
  MSG_SYNC,
  decodeSync,
  encodeFrame,
} from "./wire.js";
import { Replica } from "./replica.js";

const BACKOFF_BASE_MS = 100;
const BACKOFF_CAP_MS = 5000;

export interface PeerAddress {
  host: string;
  port: number;
}

export function parseAddress(text: string): PeerAddress {
  const at = text.lastIndexOf(":");
  if (at < 0) return { host: "127.0.0.1", port: Number(text) };
  return { host: text.slice(0, at) || "127.0.0.1", port: Number(text.slice(at + 1)) };
}

export class Peer {
  private server: net.Server | null = null;
  private sockets = new Set<net.Socket>();
  private stopped = false;

  constructor(
    public replica: Replica,
    private listenPort: number | null,
    private peers: PeerAddress[],
  ) {}

  start(): Promise<void> {
    for (const addr of this.peers) this.dial(addr, BACKOFF_BASE_MS);
    const port = this.listenPort;
    if (port === null) return Promise.resolve();
    return new Promise((resolve) => {
      this.server = net.createServer((socket) => this.attach(socket));
      this.server.listen(port, "127.0.0.1", () => resolve());
    });
  }

  private dial(addr: PeerAddress, backoffMs: number): void {
    if (this.stopped) return;
    const socket = net.createConnection(addr.port, addr.host);
    socket.on("connect", () => {
      this.attach(socket);
    });
    socket.on("error", () => {
      socket.destroy();
    });
    socket.on("close", () => {
      if (!this.stopped) {
        setTimeout(
          () => this.dial(addr, Math.min(backoffMs * 2, BACKOFF_CAP_MS)),
          backoffMs,
        ).unref();
      }
    });
  }

  private attach(socket: net.Socket): void {
    this.sockets.add(socket);
    socket.on("close", () => this.sockets.delete(socket));
    socket.on("error", () => socket.destroy());
    const frames = new FrameBuffer();
    socket.on("data", (chunk) => {
      try {
        frames.feed(Buffer.isBuffer(chunk) ? chunk : Buffer.from(chunk));
        for (let frame = frames.next(); frame !== null; frame = frames.next()) {
          if (frame.msgType === MSG_SYNC) {
            this.replica.handleSync(decodeSync(frame.payload));
          }
        }
      } catch (err) {
        if (err instanceof DecodeError) socket.destroy();
        else throw err;
      }
    });
    // anti-entropy on (re)connect
    socket.write(encodeFrame(MSG_SYNC, this.replica.encodeSyncPayload()));
  }

  broadcast(): number {
    const frame = encodeFrame(MSG_SYNC, this.replica.encodeSyncPayload());
    let sent = 0;
    for (const socket of this.sockets) {
      if (!socket.destroyed) {
        socket.write(frame);
        sent += 1;
      }
    }
    return sent;
  }

  stop(): void {
    this.stopped = true;
    for (const socket of this.sockets) socket.destroy();
    this.server?.close();
  }
}
