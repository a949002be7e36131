/** WebSocket teleop client with an injected socket factory for testability.
 *
 * Responsibilities: keep the latest state frame (dropping out-of-order t),
 * track connection status and stream staleness, measure round-trip latency
 * from the server's seq echo, and expose the server-acknowledged filter
 * state (the toggle is optimistic nowhere: the UI reads only the echo).
 */

import {
  ClientMessage,
  parseFrame,
  StateFrame,
} from "./protocol.js";

/** The subset of the browser WebSocket API the client needs. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export type ConnectionStatus = "connecting" | "open" | "closed" | "amber";

export interface ClientOptions {
  /** stream staleness horizon in ms; older frames gray the viewport */
  staleMs?: number;
  /** monotonic clock in ms, injectable for tests */
  now?: () => number;
}

export class TeleopClient {
  readonly url: string;
  private socket: SocketLike | null = null;
  private readonly makeSocket: SocketFactory;
  private readonly now: () => number;
  readonly staleMs: number;

  status: ConnectionStatus = "closed";
  latestFrame: StateFrame | null = null;
  lastError: string | null = null;
  /** ms timestamp of the last valid frame */
  private lastFrameAt = -Infinity;
  /** seq -> send timestamp, for the latency badge */
  private inflight = new Map<number, number>();
  latencyMs: number | null = null;
  private seq = 0;
  private listeners: Array<(frame: StateFrame) => void> = [];

  constructor(url: string, makeSocket: SocketFactory, opts: ClientOptions = {}) {
    this.url = url;
    this.makeSocket = makeSocket;
    this.staleMs = opts.staleMs ?? 500;
    this.now = opts.now ?? (() => Date.now());
  }

  connect(): void {
    this.status = "connecting";
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.status = "open";
    };
    sock.onclose = () => {
      this.status = "closed";
      this.socket = null;
      this.inflight.clear();
    };
    sock.onerror = () => {
      this.status = "amber";
    };
    sock.onmessage = (ev) => this.handleMessage(ev.data);
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
    this.status = "closed";
  }

  onFrame(fn: (frame: StateFrame) => void): void {
    this.listeners.push(fn);
  }

  private handleMessage(data: string): void {
    const frame = parseFrame(data);
    if (frame === null) {
      // malformed frame: drop it, mark the connection amber
      this.status = "amber";
      return;
    }
    if (frame.type === "error") {
      this.lastError = frame.msg;
      return;
    }
    // render only monotonically increasing simulation time
    if (this.latestFrame !== null && frame.t <= this.latestFrame.t) return;
    if (this.status === "amber") this.status = "open";
    this.latestFrame = frame;
    this.lastFrameAt = this.now();
    if (frame.seq !== null) {
      const sent = this.inflight.get(frame.seq);
      if (sent !== undefined) {
        this.latencyMs = this.now() - sent;
        // older sends can no longer be echoed first
        for (const k of this.inflight.keys()) {
          if (k <= frame.seq) this.inflight.delete(k);
        }
      }
    }
    for (const fn of this.listeners) fn(frame);
  }

  /** True when no valid frame arrived within the staleness horizon. */
  isStale(): boolean {
    return this.now() - this.lastFrameAt > this.staleMs;
  }

  /** Server-acknowledged filter state; null before the first frame. */
  filterOn(): boolean | null {
    return this.latestFrame === null ? null : this.latestFrame.filter_on;
  }

  private sendMessage(msg: ClientMessage): boolean {
    if (this.socket === null || this.status !== "open") return false;
    this.socket.send(JSON.stringify(msg));
    return true;
  }

  /** Send one jog with a fresh monotone seq; returns the seq or null. */
  sendJog(twist: [number, number, number, number, number, number]): number | null {
    const seq = ++this.seq;
    if (!this.sendMessage({ type: "jog", twist, seq })) return null;
    this.inflight.set(seq, this.now());
    return seq;
  }

  sendReset(): boolean {
    return this.sendMessage({ type: "reset" });
  }

  sendSetFilter(on: boolean): boolean {
    return this.sendMessage({ type: "set_filter", on });
  }
}

/** Build the server URL from page query params (host, port). */
export function urlFromQuery(search: string, defaults = { host: "127.0.0.1", port: 8765 }): string {
  const params = new URLSearchParams(search);
  const host = params.get("host") ?? defaults.host;
  const port = params.get("port") ?? String(defaults.port);
  return `ws://${host}:${port}/ws`;
}
