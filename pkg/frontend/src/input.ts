/**
 * Device input → InputMessage stream.
 *
 * Mouse drag maps to planar linear velocity, the scroll wheel (or drag
 * with the depth modifier held) to depth velocity, and bound keys to
 * angular rates about the three axes. Grip toggles on key press.
 *
 * Commands are clamped client-side to the server's declared maxima and
 * sent at the tick rate while active (>= 30 Hz under sustained drag),
 * dropping to a 1 Hz zero-velocity heartbeat when idle. While
 * disconnected nothing is sent.
 */

import type { InputMessage, Vec3 } from "./protocol.js";

export const MAX_LINEAR = 0.25; // m/s, server clamp
export const MAX_ANGULAR = 3.0; // rad/s, server clamp

export type AxisAction =
  | "pitch+"
  | "pitch-"
  | "yaw+"
  | "yaw-"
  | "roll+"
  | "roll-"
  | "grip"
  | "depth";

/** Key (KeyboardEvent.key, lowercase) → action. Loadable from JSON. */
export type InputBindings = Record<string, AxisAction>;

export const DEFAULT_BINDINGS: InputBindings = {
  w: "pitch+",
  s: "pitch-",
  a: "yaw+",
  d: "yaw-",
  q: "roll+",
  e: "roll-",
  " ": "grip",
  shift: "depth",
};

export interface InputCaptureOptions {
  send: (msg: InputMessage) => void;
  now: () => number; // milliseconds, monotonic
  bindings?: InputBindings;
  dragSensitivity?: number; // m per pixel of drag
  wheelSensitivity?: number; // m/s of depth velocity per wheel unit
  angularRate?: number; // rad/s applied per held key
}

const HEARTBEAT_MS = 1000;
const MIN_SEND_INTERVAL_MS = 10; // cap ~100 Hz; ticks arrive at display rate
const WHEEL_HOLD_MS = 150; // a wheel notch commands depth for this long

function clampAbs(v: number, limit: number): number {
  return Math.min(limit, Math.max(-limit, v));
}

export class InputCapture {
  private readonly send: (msg: InputMessage) => void;
  private readonly now: () => number;
  private readonly bindings: InputBindings;
  private readonly dragSensitivity: number;
  private readonly wheelSensitivity: number;
  private readonly angularRate: number;

  connected = false;
  grip = false;

  private dragging = false;
  private pendingDx = 0;
  private pendingDy = 0;
  private wheelVelocity = 0;
  private wheelUntilMs = 0;
  private heldKeys = new Set<string>();
  private lastTickMs: number | null = null;
  private lastSendMs = -Infinity;
  private lastWasZero = true;

  constructor(opts: InputCaptureOptions) {
    this.send = opts.send;
    this.now = opts.now;
    this.bindings = opts.bindings ?? DEFAULT_BINDINGS;
    this.dragSensitivity = opts.dragSensitivity ?? 0.0008;
    this.wheelSensitivity = opts.wheelSensitivity ?? 0.002;
    this.angularRate = opts.angularRate ?? 1.5;
  }

  setConnected(connected: boolean): void {
    this.connected = connected;
    if (!connected) {
      this.dragging = false;
      this.pendingDx = 0;
      this.pendingDy = 0;
      this.heldKeys.clear();
    }
  }

  pointerDown(): void {
    this.dragging = true;
    this.pendingDx = 0;
    this.pendingDy = 0;
  }

  pointerMove(dx: number, dy: number): void {
    if (!this.dragging) return;
    this.pendingDx += dx;
    this.pendingDy += dy;
  }

  pointerUp(): void {
    this.dragging = false;
    this.pendingDx = 0;
    this.pendingDy = 0;
  }

  wheel(deltaY: number): void {
    this.wheelVelocity = clampAbs(-deltaY * this.wheelSensitivity, MAX_LINEAR);
    this.wheelUntilMs = this.now() + WHEEL_HOLD_MS;
  }

  keyDown(key: string, repeat = false): void {
    const action = this.bindings[key.toLowerCase()];
    if (action === undefined) return;
    if (action === "grip") {
      if (!repeat && this.connected) this.grip = !this.grip;
      return;
    }
    this.heldKeys.add(action);
  }

  keyUp(key: string): void {
    const action = this.bindings[key.toLowerCase()];
    if (action !== undefined && action !== "grip") this.heldKeys.delete(action);
  }

  /** Call once per animation frame; sends when active or heartbeat-due. */
  tick(): void {
    const now = this.now();
    const dt = this.lastTickMs === null ? 0 : (now - this.lastTickMs) / 1000;
    this.lastTickMs = now;
    if (!this.connected) return;

    const linear = this.linearVelocity(dt, now);
    const angular = this.angularVelocity();
    this.pendingDx = 0;
    this.pendingDy = 0;

    const isZero =
      linear.every((v) => v === 0) && angular.every((v) => v === 0);
    const sinceSend = now - this.lastSendMs;
    const active = !isZero || !this.lastWasZero || this.dragging;
    const due = active ? sinceSend >= MIN_SEND_INTERVAL_MS : sinceSend >= HEARTBEAT_MS;
    if (!due) return;

    this.lastSendMs = now;
    this.lastWasZero = isZero;
    this.send({
      type: "input",
      linear,
      angular,
      grip: this.grip,
      timestamp: now / 1000,
    });
  }

  private linearVelocity(dt: number, nowMs: number): Vec3 {
    let vx = 0;
    let vy = 0;
    let vz = 0;
    if (this.dragging && dt > 0) {
      const depthMode = this.heldKeys.has("depth");
      vx = clampAbs((this.pendingDx * this.dragSensitivity) / dt, MAX_LINEAR);
      // Screen y grows downward; world y grows upward.
      const vertical = clampAbs((-this.pendingDy * this.dragSensitivity) / dt, MAX_LINEAR);
      if (depthMode) {
        vz = vertical;
      } else {
        vy = vertical;
      }
    }
    if (nowMs < this.wheelUntilMs) {
      vz = clampAbs(vz + this.wheelVelocity, MAX_LINEAR);
    }
    return [vx, vy, vz];
  }

  private angularVelocity(): Vec3 {
    const rate = Math.min(this.angularRate, MAX_ANGULAR);
    let wx = 0;
    let wy = 0;
    let wz = 0;
    if (this.heldKeys.has("pitch+")) wx += rate;
    if (this.heldKeys.has("pitch-")) wx -= rate;
    if (this.heldKeys.has("yaw+")) wy += rate;
    if (this.heldKeys.has("yaw-")) wy -= rate;
    if (this.heldKeys.has("roll+")) wz += rate;
    if (this.heldKeys.has("roll-")) wz -= rate;
    return [clampAbs(wx, MAX_ANGULAR), clampAbs(wy, MAX_ANGULAR), clampAbs(wz, MAX_ANGULAR)];
  }
}
