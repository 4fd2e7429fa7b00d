/**
 * Client-side view of the server state stream.
 *
 * Keeps the two most recent StateUpdates and interpolates poses between
 * them for smooth rendering at display rate. Interpolation only: if the
 * stream stalls, the view freezes at the newest snapshot after 100 ms
 * rather than extrapolating. Scalars (phase, color, HUD numbers) always
 * come verbatim from the newest snapshot — nothing is computed here.
 */

import type { Quat, StateUpdate, Vec3 } from "./protocol.js";

export const MAX_EXTRAPOLATION_MS = 100;

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

interface Snapshot {
  state: StateUpdate;
  receivedAtMs: number;
}

export interface RenderPose {
  ringPosition: Vec3;
  ringRotation: Quat;
  instrumentPosition: Vec3;
  instrumentRotation: Quat;
}

function lerp3(a: Vec3, b: Vec3, t: number): Vec3 {
  return [
    a[0] + (b[0] - a[0]) * t,
    a[1] + (b[1] - a[1]) * t,
    a[2] + (b[2] - a[2]) * t,
  ];
}

/** Shortest-arc spherical interpolation between unit quaternions (w, x, y, z). */
function slerp(a: Quat, b: Quat, t: number): Quat {
  let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  let bw = b[0], bx = b[1], by = b[2], bz = b[3];
  if (dot < 0) {
    dot = -dot;
    bw = -bw; bx = -bx; by = -by; bz = -bz;
  }
  let ka: number, kb: number;
  if (dot > 0.9995) {
    ka = 1 - t;
    kb = t;
  } else {
    const theta = Math.acos(Math.min(1, dot));
    const s = Math.sin(theta);
    ka = Math.sin((1 - t) * theta) / s;
    kb = Math.sin(t * theta) / s;
  }
  const q: Quat = [
    ka * a[0] + kb * bw,
    ka * a[1] + kb * bx,
    ka * a[2] + kb * by,
    ka * a[3] + kb * bz,
  ];
  const n = Math.hypot(q[0], q[1], q[2], q[3]) || 1;
  return [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
}

export class ViewState {
  status: ConnectionStatus = "connecting";
  private prev: Snapshot | null = null;
  private next: Snapshot | null = null;

  get latest(): StateUpdate | null {
    return this.next ? this.next.state : null;
  }

  push(state: StateUpdate, receivedAtMs: number): void {
    this.prev = this.next;
    this.next = { state, receivedAtMs };
  }

  /**
   * Pose for the render frame at `nowMs`. Renders one snapshot interval
   * behind the newest state so there is usually a bracket to interpolate
   * within; once the clock runs past the newest snapshot by more than
   * MAX_EXTRAPOLATION_MS past its receipt, the pose stays frozen there.
   */
  poseAt(nowMs: number): RenderPose | null {
    if (this.next === null) return null;
    const b = this.next;
    if (this.prev === null) return poseOf(b.state);
    const a = this.prev;
    const span = b.receivedAtMs - a.receivedAtMs;
    if (span <= 0) return poseOf(b.state);
    // Render against the previous interval: at nowMs == next.receivedAtMs
    // we show prev, reaching next one interval later.
    let t = (nowMs - b.receivedAtMs) / span;
    if (t <= 0) return poseOf(a.state);
    if (t >= 1) return poseOf(b.state); // freeze: never move past real data
    return {
      ringPosition: lerp3(a.state.ringPosition, b.state.ringPosition, t),
      ringRotation: slerp(a.state.ringRotation, b.state.ringRotation, t),
      instrumentPosition: lerp3(a.state.instrumentPosition, b.state.instrumentPosition, t),
      instrumentRotation: slerp(a.state.instrumentRotation, b.state.instrumentRotation, t),
    };
  }

  /** True when the stream has gone quiet long enough that the view is frozen. */
  isStale(nowMs: number): boolean {
    return this.next !== null && nowMs - this.next.receivedAtMs > MAX_EXTRAPOLATION_MS;
  }
}

function poseOf(s: StateUpdate): RenderPose {
  return {
    ringPosition: s.ringPosition,
    ringRotation: s.ringRotation,
    instrumentPosition: s.instrumentPosition,
    instrumentRotation: s.instrumentRotation,
  };
}
