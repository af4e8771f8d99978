/** Pure rendering: (frame, view state) -> draw list.  No DOM, no time, no
 *  randomness, so snapshots are stable and the suite runs headless.  A thin
 *  canvas backend (paint.ts) turns primitives into 2D context calls. */

import {
  COIL_COLUMNS, COIL_ROWS, CURRENT_LIMIT_A, TelemetryFrame,
  WORKSPACE_XY_M,
} from "./protocol.js";
import { Viewport, worldToScreen } from "./drag.js";
import { ChartSample, Store } from "./store.js";

export const FORCE_PX_PER_N = 40;
export const COIL_CELL_PX = 36;

export type Primitive =
  | { kind: "rect"; x: number; y: number; w: number; h: number;
      fill?: string; stroke?: string; lineWidth?: number }
  | { kind: "circle"; x: number; y: number; r: number;
      fill?: string; stroke?: string }
  | { kind: "line"; x1: number; y1: number; x2: number; y2: number;
      stroke: string; lineWidth?: number }
  | { kind: "arrow"; x1: number; y1: number; x2: number; y2: number;
      stroke: string }
  | { kind: "text"; x: number; y: number; text: string; fill: string;
      size?: number }
  | { kind: "polyline"; points: Array<[number, number]>; stroke: string };

/** Map |I|/limit in [0, 1] to a cold-to-hot color. */
export function heatColor(fraction: number): string {
  const f = Math.min(1, Math.max(0, fraction));
  const r = Math.round(30 + 225 * f);
  const g = Math.round(40 + 60 * (1 - f));
  const b = Math.round(80 + 120 * (1 - f));
  return `rgb(${r},${g},${b})`;
}

function quaternionYaw(q: number[]): number {
  const [w, x, y, z] = q;
  return Math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
}

function sceneView(frame: TelemetryFrame, store: Store,
                   view: Viewport): Primitive[] {
  const out: Primitive[] = [];
  // Screen face (the co-located display under the handle).
  const edge = worldToScreen(view, -WORKSPACE_XY_M, WORKSPACE_XY_M);
  const span = 2 * WORKSPACE_XY_M * view.pxPerMeter;
  out.push({ kind: "rect", x: edge.px, y: edge.py, w: span, h: span,
             stroke: store.drag.clamped ? "#ff5050" : "#3a4a5a",
             lineWidth: store.drag.clamped ? 3 : 1 });
  if (store.drag.clamped) {
    out.push({ kind: "text", x: edge.px, y: edge.py - 6,
               text: "target clamped to workspace", fill: "#ff5050" });
  }
  // Handle: disc at (x, y), bar showing yaw, label with height.
  const [hx, hy, hz] = frame.pose;
  const hp = worldToScreen(view, hx, hy);
  const yaw = quaternionYaw(frame.pose.slice(3));
  const barLen = 0.030 * view.pxPerMeter;
  out.push({ kind: "circle", x: hp.px, y: hp.py, r: 10, fill: "#d8dde4" });
  out.push({ kind: "line",
             x1: hp.px - Math.cos(yaw) * barLen,
             y1: hp.py + Math.sin(yaw) * barLen,
             x2: hp.px + Math.cos(yaw) * barLen,
             y2: hp.py - Math.sin(yaw) * barLen,
             stroke: "#d8dde4", lineWidth: 3 });
  out.push({ kind: "text", x: hp.px + 14, y: hp.py - 14,
             text: `z ${(hz * 1000).toFixed(1)} mm`, fill: "#9aa7b5" });
  // Hand target marker.
  if (frame.hand_target !== null) {
    const tp = worldToScreen(view, frame.hand_target[0], frame.hand_target[1]);
    out.push({ kind: "circle", x: tp.px, y: tp.py, r: 6, stroke: "#58c470" });
  }
  // Commanded force arrow (N -> px via the legend scale).
  const [fx, fy] = frame.wrench;
  const mag = Math.hypot(fx, fy, frame.wrench[2]);
  if (mag > 1e-3) {
    out.push({ kind: "arrow", x1: hp.px, y1: hp.py,
               x2: hp.px + fx * FORCE_PX_PER_N,
               y2: hp.py - fy * FORCE_PX_PER_N, stroke: "#f0b429" });
  }
  // Legend: 1 N reference bar.
  out.push({ kind: "line", x1: 12, y1: view.heightPx - 14,
             x2: 12 + FORCE_PX_PER_N, y2: view.heightPx - 14,
             stroke: "#f0b429", lineWidth: 2 });
  out.push({ kind: "text", x: 16 + FORCE_PX_PER_N, y: view.heightPx - 10,
             text: "1 N", fill: "#f0b429" });
  return out;
}

function coilPanel(frame: TelemetryFrame, view: Viewport): Primitive[] {
  const out: Primitive[] = [];
  const panelW = COIL_COLUMNS * COIL_CELL_PX;
  const x0 = view.widthPx - panelW - 12;
  const y0 = 12;
  out.push({ kind: "text", x: x0, y: y0 - 2, text: "coil currents |I| / 4 A",
             fill: "#9aa7b5" });
  for (let row = 0; row < COIL_ROWS; row += 1) {
    for (let col = 0; col < COIL_COLUMNS; col += 1) {
      const k = row * COIL_COLUMNS + col;
      const amps = Math.abs(frame.currents[k]);
      const fraction = amps / CURRENT_LIMIT_A;
      const cell: Primitive = {
        kind: "rect",
        x: x0 + col * COIL_CELL_PX,
        // Row 0 sits at the most negative y; draw it at the bottom so the
        // panel matches the top-down scene orientation.
        y: y0 + (COIL_ROWS - 1 - row) * COIL_CELL_PX,
        w: COIL_CELL_PX - 2,
        h: COIL_CELL_PX - 2,
        fill: heatColor(fraction),
      };
      if (fraction >= 1 - 1e-9) {
        cell.stroke = "#ff5050";
        cell.lineWidth = 3;
      }
      out.push(cell);
    }
  }
  return out;
}

function stripChart(samples: readonly ChartSample[], x0: number, y0: number,
                    w: number, h: number, scale: number,
                    colors: string[], title: string): Primitive[] {
  const out: Primitive[] = [];
  out.push({ kind: "rect", x: x0, y: y0, w, h, stroke: "#3a4a5a" });
  out.push({ kind: "text", x: x0 + 4, y: y0 + 12, text: title,
             fill: "#9aa7b5" });
  if (samples.length < 2) return out;
  const t0 = samples[0].t;
  const t1 = samples[samples.length - 1].t;
  const dt = Math.max(t1 - t0, 1e-9);
  const channels = samples[0].values.length;
  for (let c = 0; c < channels; c += 1) {
    const points: Array<[number, number]> = samples.map((s) => [
      x0 + ((s.t - t0) / dt) * w,
      y0 + h / 2 - Math.max(-h / 2, Math.min(h / 2, s.values[c] * scale)),
    ]);
    out.push({ kind: "polyline", points, stroke: colors[c % colors.length] });
  }
  return out;
}

function statusBar(store: Store, view: Viewport, nowMs: number): Primitive[] {
  const out: Primitive[] = [];
  const parts = [`status: ${store.status}`];
  if (store.retryInMs !== null) {
    parts.push(`retry in ${(store.retryInMs / 1000).toFixed(1)} s`);
  }
  if (store.frame !== null) {
    parts.push(`mode: ${store.frame.mode}`, `t ${store.frame.t.toFixed(3)} s`);
  }
  if (store.lastError !== null) parts.push(`error: ${store.lastError}`);
  if (store.malformedFrames > 0) {
    parts.push(`malformed: ${store.malformedFrames}`);
  }
  out.push({ kind: "text", x: 12, y: 16, text: parts.join("   "),
             fill: "#9aa7b5" });
  if (store.isStale(nowMs)) {
    out.push({ kind: "rect", x: view.widthPx / 2 - 40, y: 24, w: 80, h: 22,
               fill: "#a33" });
    out.push({ kind: "text", x: view.widthPx / 2 - 24, y: 39, text: "STALE",
               fill: "#fff", size: 14 });
  }
  if (store.frame?.saturated) {
    out.push({ kind: "text", x: 12, y: 34, text: "COILS SATURATED",
               fill: "#ff5050", size: 13 });
  }
  if (store.frame?.safe_stopped) {
    out.push({ kind: "text", x: 12, y: 50, text: "SAFE-STOPPED",
               fill: "#ff5050", size: 13 });
  }
  return out;
}

/** Build the complete draw list for one frame of the dashboard. */
export function render(store: Store, view: Viewport,
                       nowMs: number): Primitive[] {
  const out: Primitive[] = [];
  if (store.frame !== null) {
    out.push(...sceneView(store.frame, store, view));
    out.push(...coilPanel(store.frame, view));
    const chartW = Math.min(260, view.widthPx - 24);
    out.push(...stripChart(store.poseChart.toArray(), 12, view.heightPx - 150,
                           chartW, 60, 1000, ["#58c470", "#4aa3df", "#f0b429"],
                           "position (mm)"));
    out.push(...stripChart(store.errorChart.toArray(), 12,
                           view.heightPx - 84, chartW, 60, 10000,
                           ["#58c470", "#4aa3df", "#f0b429"],
                           "target error (x10 mm)"));
  }
  out.push(...statusBar(store, view, nowMs));
  return out;
}
