/** Wire protocol shared with the Python teleop server (JSON text frames). */

export interface PoseDict {
  /** translation [x, y, z] in meters */
  t: [number, number, number];
  /** rotation as an axis-angle 3-vector */
  aa: [number, number, number];
}

export interface SqDict {
  /** semi-axes [a1, a2, a3] */
  a: [number, number, number];
  /** exponents [e1, e2] */
  e: [number, number];
  pose: PoseDict;
}

export type FilterStatus = "optimal" | "relaxed" | "halted";

export interface StateFrame {
  type: "state";
  t: number;
  q: number[];
  ee_pose: PoseDict;
  u_nominal: number[];
  u_filtered: number[];
  h_min: number | null;
  d_min: number | null;
  mu: number;
  status: FilterStatus;
  filter_on: boolean;
  /** echo of the last consumed jog seq, used for the latency badge */
  seq: number | null;
  obstacles: SqDict[];
  robot_sqs: SqDict[];
}

export interface ErrorFrame {
  type: "error";
  msg: string;
}

export type ServerFrame = StateFrame | ErrorFrame;

export interface JogMessage {
  type: "jog";
  twist: [number, number, number, number, number, number];
  seq: number;
}

export interface ResetMessage {
  type: "reset";
}

export interface SetFilterMessage {
  type: "set_filter";
  on: boolean;
}

export type ClientMessage = JogMessage | ResetMessage | SetFilterMessage;

function isVec(x: unknown, n: number): boolean {
  return Array.isArray(x) && x.length === n &&
    x.every((v) => typeof v === "number" && Number.isFinite(v));
}

function isPose(x: unknown): x is PoseDict {
  const p = x as PoseDict;
  return !!p && isVec(p.t, 3) && isVec(p.aa, 3);
}

function isSq(x: unknown): x is SqDict {
  const s = x as SqDict;
  return !!s && isVec(s.a, 3) && isVec(s.e, 2) && isPose(s.pose);
}

/** Parse and validate one server frame; returns null for malformed input. */
export function parseFrame(text: string): ServerFrame | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  const f = doc as Record<string, unknown>;
  if (!f || typeof f !== "object") return null;
  if (f.type === "error") {
    return typeof f.msg === "string" ? { type: "error", msg: f.msg } : null;
  }
  if (f.type !== "state") return null;
  const ok =
    typeof f.t === "number" && Number.isFinite(f.t) &&
    Array.isArray(f.q) &&
    isPose(f.ee_pose) &&
    isVec(f.u_nominal, (f.q as unknown[]).length) &&
    isVec(f.u_filtered, (f.q as unknown[]).length) &&
    (f.h_min === null || typeof f.h_min === "number") &&
    (f.d_min === null || typeof f.d_min === "number") &&
    typeof f.mu === "number" &&
    (f.status === "optimal" || f.status === "relaxed" || f.status === "halted") &&
    typeof f.filter_on === "boolean" &&
    Array.isArray(f.obstacles) && (f.obstacles as unknown[]).every(isSq) &&
    Array.isArray(f.robot_sqs) && (f.robot_sqs as unknown[]).every(isSq);
  return ok ? (f as unknown as StateFrame) : null;
}

/** Largest deviation between the filtered and nominal commands. */
export function interventionMagnitude(frame: StateFrame): number {
  let worst = 0;
  for (let i = 0; i < frame.u_nominal.length; i++) {
    worst = Math.max(worst, Math.abs(frame.u_filtered[i] - frame.u_nominal[i]));
  }
  return worst;
}
