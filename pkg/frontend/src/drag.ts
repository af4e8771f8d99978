/** Pointer-to-target mapping: the pointer on the co-located view plane sets
 *  (x, y), the scroll wheel moves z.  Commands are throttled to 60 Hz
 *  regardless of pointer event rate; the trailing position is never lost. */

import { Command, clampTarget, handTargetCommand } from "./protocol.js";
import { Store } from "./store.js";

export const COMMAND_INTERVAL_MS = 1000 / 60;
export const SCROLL_STEP_M = 0.002;

export interface Viewport {
  widthPx: number;
  heightPx: number;
  pxPerMeter: number;
}

/** Canvas pixel coordinates -> workspace meters (top-down view, y up). */
export function screenToWorld(view: Viewport, px: number, py: number):
    { x: number; y: number } {
  return {
    x: (px - view.widthPx / 2) / view.pxPerMeter,
    y: (view.heightPx / 2 - py) / view.pxPerMeter,
  };
}

export function worldToScreen(view: Viewport, x: number, y: number):
    { px: number; py: number } {
  return {
    px: view.widthPx / 2 + x * view.pxPerMeter,
    py: view.heightPx / 2 - y * view.pxPerMeter,
  };
}

export class DragController {
  private lastSentAt = -Infinity;
  private pending: Command | null = null;
  readonly now: () => number;
  readonly setTimer: (fn: () => void, ms: number) => unknown;

  constructor(readonly store: Store,
              readonly send: (cmd: Command) => void,
              options: { now?: () => number;
                         setTimer?: (fn: () => void, ms: number) => unknown }
                = {}) {
    this.now = options.now ?? (() => Date.now());
    this.setTimer = options.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
  }

  pointerDown(view: Viewport, px: number, py: number): void {
    this.store.drag.active = true;
    this.pointerMove(view, px, py);
  }

  pointerMove(view: Viewport, px: number, py: number): void {
    if (!this.store.drag.active) return;
    const w = screenToWorld(view, px, py);
    this.setTarget(w.x, w.y, this.store.drag.z);
  }

  /** Positive wheel steps lower the handle, matching screen conventions. */
  wheel(steps: number): void {
    if (!this.store.drag.active) return;
    const z = this.store.drag.z - steps * SCROLL_STEP_M;
    this.setTarget(this.store.drag.x, this.store.drag.y, z);
  }

  pointerUp(): void {
    this.store.drag.active = false;
    // Anything already queued for the trailing edge still goes out; no new
    // commands are generated after release.
    this.store.notify();
  }

  private setTarget(x: number, y: number, z: number): void {
    const c = clampTarget(x, y, z);
    this.store.drag.x = c.x;
    this.store.drag.y = c.y;
    this.store.drag.z = c.z;
    this.store.drag.clamped = c.clamped;
    this.store.notify();
    this.queue(handTargetCommand(c.x, c.y, c.z));
  }

  private queue(cmd: Command): void {
    const elapsed = this.now() - this.lastSentAt;
    if (elapsed >= COMMAND_INTERVAL_MS) {
      this.lastSentAt = this.now();
      this.send(cmd);
      return;
    }
    // Within the throttle window: remember only the newest command and
    // flush it once on the trailing edge.
    const schedule = this.pending === null;
    this.pending = cmd;
    if (schedule) {
      this.setTimer(() => {
        const queued = this.pending;
        this.pending = null;
        if (queued !== null) {
          this.lastSentAt = this.now();
          this.send(queued);
        }
      }, COMMAND_INTERVAL_MS - elapsed);
    }
  }
}
