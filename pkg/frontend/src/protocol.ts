/** Wire protocol shared with the simulation service: one telemetry frame
 *  shape in, six command shapes out.  Everything the UI knows about the
 *  simulation arrives through `TelemetryFrame`. */

export const CURRENT_LIMIT_A = 4.0;
export const COIL_COUNT = 12;
export const COIL_ROWS = 3;
export const COIL_COLUMNS = 4;
export const COIL_PITCH_M = 0.027;
/** Horizontal interaction envelope: |x|, |y| <= 40 mm. */
export const WORKSPACE_XY_M = 0.040;
/** Vertical interaction range above the screen face. */
export const Z_MIN_M = 0.008;
export const Z_MAX_M = 0.040;

export interface Contact {
  id: number;
}

export interface TelemetryFrame {
  type: "telemetry";
  seq: number;
  t: number;
  /** [x, y, z, qw, qx, qy, qz] true handle pose. */
  pose: number[];
  /** Same layout, estimator output. */
  est_pose: number[];
  /** [fx, fy, fz, tx, ty, tz] commanded wrench. */
  wrench: number[];
  /** 12 coil currents, amperes, row-major over the 3x4 lattice. */
  currents: number[];
  contacts: Contact[];
  mode: "motion" | "haptic";
  tick: number;
  saturated: boolean;
  safe_stopped: boolean;
  target_seq: number;
  hand_target: number[] | null;
}

export interface ErrorFrame {
  type: "error";
  reason: string;
}

export type ServerMessage = TelemetryFrame | ErrorFrame;

export type Command =
  | { type: "set_hand_target"; pose: number[] }
  | { type: "set_mode"; mode: "motion" | "haptic" }
  | { type: "load_scene"; scene?: object; path?: string }
  | { type: "set_gains"; kp: number[]; kd: number[] }
  | { type: "pause" }
  | { type: "resume" };

function isVector(v: unknown, n: number): v is number[] {
  return Array.isArray(v) && v.length === n &&
    v.every((x) => typeof x === "number" && Number.isFinite(x));
}

/** Parse one socket message.  Returns null for anything that is not a
 *  well-formed telemetry or error frame; the caller counts the rejects. */
export function parseServerMessage(text: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const msg = data as Record<string, unknown>;
  if (msg.type === "error") {
    return typeof msg.reason === "string"
      ? { type: "error", reason: msg.reason }
      : null;
  }
  if (msg.type !== "telemetry") return null;
  if (typeof msg.seq !== "number" || typeof msg.t !== "number" ||
      typeof msg.tick !== "number" || typeof msg.target_seq !== "number") {
    return null;
  }
  if (!isVector(msg.pose, 7) || !isVector(msg.est_pose, 7) ||
      !isVector(msg.wrench, 6) || !isVector(msg.currents, COIL_COUNT)) {
    return null;
  }
  if (msg.mode !== "motion" && msg.mode !== "haptic") return null;
  if (typeof msg.saturated !== "boolean" ||
      typeof msg.safe_stopped !== "boolean") {
    return null;
  }
  if (!Array.isArray(msg.contacts)) return null;
  if (msg.hand_target !== null && !isVector(msg.hand_target, 7)) return null;
  return msg as unknown as TelemetryFrame;
}

export function handTargetCommand(x: number, y: number, z: number): Command {
  return { type: "set_hand_target", pose: [x, y, z, 1, 0, 0, 0] };
}

/** Clamp a requested target into the interaction envelope.  The `clamped`
 *  flag drives the visual cue at the workspace edge. */
export function clampTarget(x: number, y: number, z: number):
    { x: number; y: number; z: number; clamped: boolean } {
  const cx = Math.min(WORKSPACE_XY_M, Math.max(-WORKSPACE_XY_M, x));
  const cy = Math.min(WORKSPACE_XY_M, Math.max(-WORKSPACE_XY_M, y));
  const cz = Math.min(Z_MAX_M, Math.max(Z_MIN_M, z));
  return { x: cx, y: cy, z: cz, clamped: cx !== x || cy !== y || cz !== z };
}
