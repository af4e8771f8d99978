/** WebSocket session with reconnect backoff.  The socket constructor and
 *  clock are injectable so the whole layer runs against the protocol test
 *  double with fake time. */

import { Command, parseServerMessage } from "./protocol.js";
import { Store } from "./store.js";

export interface SocketLike {
  onopen: (() => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  readyState: number;
  send(data: string): void;
  close(): void;
}

export interface SessionOptions {
  makeSocket?: (url: string) => SocketLike;
  now?: () => number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

const OPEN = 1;
const BACKOFF_START_MS = 500;
const BACKOFF_CAP_MS = 8000;

export class Session {
  private socket: SocketLike | null = null;
  private backoffMs = BACKOFF_START_MS;
  private retryHandle: unknown = null;
  private closed = false;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly now: () => number;
  private readonly setTimer: (fn: () => void, ms: number) => unknown;
  private readonly clearTimer: (handle: unknown) => void;

  constructor(readonly url: string, readonly store: Store,
              options: SessionOptions = {}) {
    this.makeSocket = options.makeSocket ??
      ((u) => new WebSocket(u) as unknown as SocketLike);
    this.now = options.now ?? (() => Date.now());
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = options.clearTimer ??
      ((h) => clearTimeout(h as number));
    this.open();
  }

  private open(): void {
    this.store.status = "connecting";
    this.store.retryInMs = null;
    this.store.notify();
    let socket: SocketLike;
    try {
      socket = this.makeSocket(this.url);
    } catch {
      this.scheduleRetry();
      return;
    }
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = BACKOFF_START_MS;
      this.store.status = "connected";
      this.store.retryInMs = null;
      this.store.notify();
    };
    socket.onmessage = (ev) => this.receive(ev.data);
    socket.onerror = () => { /* onclose follows; status set there */ };
    socket.onclose = () => {
      this.socket = null;
      if (!this.closed) this.scheduleRetry();
    };
  }

  private scheduleRetry(): void {
    this.store.status = "disconnected";
    this.store.retryInMs = this.backoffMs;
    this.store.notify();
    this.retryHandle = this.setTimer(() => this.open(), this.backoffMs);
    this.backoffMs = Math.min(this.backoffMs * 2, BACKOFF_CAP_MS);
  }

  private receive(data: string): void {
    const msg = parseServerMessage(data);
    if (msg === null) {
      this.store.malformedFrames += 1;
      this.store.notify();
      return;
    }
    if (msg.type === "error") {
      this.store.lastError = msg.reason;
      this.store.notify();
      return;
    }
    this.store.acceptFrame(msg, this.now());
  }

  /** Send a documented command; drops silently while disconnected. */
  send(command: Command): boolean {
    if (this.socket === null || this.socket.readyState !== OPEN) return false;
    this.socket.send(JSON.stringify(command));
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.retryHandle !== null) this.clearTimer(this.retryHandle);
    this.socket?.close();
  }
}
