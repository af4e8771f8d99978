/** Single mutable store updated by network and pointer events; the render
 *  loop reads it and never blocks on the socket. */

import { TelemetryFrame } from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export const STALE_AFTER_MS = 500;

export interface DragState {
  active: boolean;
  /** Commanded target in workspace coordinates (meters). */
  x: number;
  y: number;
  z: number;
  /** True while the last pointer position had to be clamped. */
  clamped: boolean;
}

export interface ChartSample {
  t: number;
  values: number[];
}

/** Fixed-capacity history for the strip charts. */
export class RingBuffer {
  private samples: ChartSample[] = [];

  constructor(readonly capacity: number = 600) {}

  push(sample: ChartSample): void {
    this.samples.push(sample);
    if (this.samples.length > this.capacity) this.samples.shift();
  }

  clear(): void {
    this.samples = [];
  }

  toArray(): readonly ChartSample[] {
    return this.samples;
  }
}

export class Store {
  status: ConnectionStatus = "connecting";
  /** Milliseconds until the next reconnect attempt (visible countdown). */
  retryInMs: number | null = null;
  frame: TelemetryFrame | null = null;
  /** Wall-clock ms when `frame` arrived. */
  frameReceivedAt = 0;
  lastSeq = -1;
  /** Sequence resets (server restarts) observed. */
  sequenceResets = 0;
  malformedFrames = 0;
  lastError: string | null = null;
  camera: "top-down" | "orbit" = "top-down";
  drag: DragState = { active: false, x: 0, y: 0, z: 0.025, clamped: false };
  /** Scene last sent with load_scene, drawn locally (frames carry no
   *  geometry, only contact counts). */
  scene: object | null = null;
  poseChart = new RingBuffer();
  errorChart = new RingBuffer();

  private listeners: Array<() => void> = [];

  subscribe(fn: () => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((f) => f !== fn);
    };
  }

  notify(): void {
    for (const fn of this.listeners) fn();
  }

  acceptFrame(frame: TelemetryFrame, nowMs: number): void {
    if (frame.seq <= this.lastSeq) {
      // Server restarted: sequence numbers start over; history is stale.
      this.sequenceResets += 1;
      this.poseChart.clear();
      this.errorChart.clear();
    }
    this.lastSeq = frame.seq;
    this.frame = frame;
    this.frameReceivedAt = nowMs;
    this.poseChart.push({ t: frame.t, values: frame.pose.slice(0, 3) });
    const target = frame.hand_target ?? frame.pose;
    this.errorChart.push({
      t: frame.t,
      values: [0, 1, 2].map((i) => frame.pose[i] - target[i]),
    });
    this.notify();
  }

  isStale(nowMs: number): boolean {
    return this.frame !== null &&
      nowMs - this.frameReceivedAt > STALE_AFTER_MS;
  }
}
