/**
 * Wire protocol: JSON text frames in a {type, seq, payload} envelope,
 * mirroring the server's schema. Unknown payload fields are ignored;
 * anything structurally wrong raises ProtocolError.
 */

export class ProtocolError extends Error {}

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number]; // (w, x, y, z)

export interface InputMessage {
  type: "input";
  linear: Vec3;
  angular: Vec3;
  grip: boolean;
  timestamp: number;
}

export type ControlVerb = "start_session" | "start_trial" | "abort_trial" | "next_day";

export interface ControlMessage {
  type: "control";
  verb: ControlVerb;
  params: Record<string, unknown>;
}

export interface StateUpdate {
  type: "state";
  phase: string;
  simTime: number;
  elapsed: number;
  ringPosition: Vec3;
  ringRotation: Quat;
  instrumentPosition: Vec3;
  instrumentRotation: Quat;
  color: number;
  deviationMm: number;
  angDeviation: number;
  sStar: number;
  progress: number;
  gripClosed: boolean;
  holdingRing: boolean;
  trialIndex: number;
  day: number;
}

export interface EventMessage {
  type: "event";
  kind: string;
  data: Record<string, unknown>;
}

export type ServerMessage = StateUpdate | EventMessage;
export type ClientMessage = InputMessage | ControlMessage;
export type Message = ServerMessage | ClientMessage;

const VERBS: ControlVerb[] = ["start_session", "start_trial", "abort_trial", "next_day"];

function num(p: Record<string, unknown>, key: string): number {
  const v = p[key];
  if (typeof v !== "number" || !Number.isFinite(v)) {
    throw new ProtocolError(`${key} must be a finite number`);
  }
  return v;
}

function int(p: Record<string, unknown>, key: string): number {
  const v = num(p, key);
  if (!Number.isInteger(v)) throw new ProtocolError(`${key} must be an integer`);
  return v;
}

function bool(p: Record<string, unknown>, key: string): boolean {
  const v = p[key];
  if (typeof v !== "boolean") throw new ProtocolError(`${key} must be a boolean`);
  return v;
}

function str(p: Record<string, unknown>, key: string): string {
  const v = p[key];
  if (typeof v !== "string") throw new ProtocolError(`${key} must be a string`);
  return v;
}

function vec(p: Record<string, unknown>, key: string, n: number): number[] {
  const v = p[key];
  if (!Array.isArray(v) || v.length !== n || !v.every((c) => typeof c === "number" && Number.isFinite(c))) {
    throw new ProtocolError(`${key} must be a ${n}-vector of finite numbers`);
  }
  return v.slice() as number[];
}

function obj(v: unknown, what: string): Record<string, unknown> {
  if (typeof v !== "object" || v === null || Array.isArray(v)) {
    throw new ProtocolError(`${what} must be an object`);
  }
  return v as Record<string, unknown>;
}

export function encode(msg: ClientMessage, seq: number): string {
  let payload: Record<string, unknown>;
  if (msg.type === "input") {
    payload = {
      linear: msg.linear,
      angular: msg.angular,
      grip: msg.grip,
      timestamp: msg.timestamp,
    };
  } else {
    payload = { verb: msg.verb, params: msg.params };
  }
  return JSON.stringify({ type: msg.type, seq, payload });
}

export function decode(frame: string): { msg: Message; seq: number } {
  let raw: unknown;
  try {
    raw = JSON.parse(frame);
  } catch (e) {
    throw new ProtocolError(`invalid JSON frame: ${(e as Error).message}`);
  }
  const envelope = obj(raw, "frame");
  const seq = envelope["seq"];
  if (typeof seq !== "number" || !Number.isInteger(seq)) {
    throw new ProtocolError("seq must be an integer");
  }
  const payload = obj(envelope["payload"], "payload");
  switch (envelope["type"]) {
    case "input":
      return {
        seq,
        msg: {
          type: "input",
          linear: vec(payload, "linear", 3) as Vec3,
          angular: vec(payload, "angular", 3) as Vec3,
          grip: bool(payload, "grip"),
          timestamp: num(payload, "timestamp"),
        },
      };
    case "control": {
      const verb = str(payload, "verb");
      if (!VERBS.includes(verb as ControlVerb)) {
        throw new ProtocolError(`unknown verb ${verb}`);
      }
      const params = payload["params"] === undefined ? {} : obj(payload["params"], "params");
      return { seq, msg: { type: "control", verb: verb as ControlVerb, params } };
    }
    case "state":
      return {
        seq,
        msg: {
          type: "state",
          phase: str(payload, "phase"),
          simTime: num(payload, "sim_time"),
          elapsed: num(payload, "elapsed"),
          ringPosition: vec(payload, "ring_position", 3) as Vec3,
          ringRotation: vec(payload, "ring_rotation", 4) as Quat,
          instrumentPosition: vec(payload, "instrument_position", 3) as Vec3,
          instrumentRotation: vec(payload, "instrument_rotation", 4) as Quat,
          color: num(payload, "color"),
          deviationMm: num(payload, "deviation_mm"),
          angDeviation: num(payload, "ang_deviation"),
          sStar: num(payload, "s_star"),
          progress: num(payload, "progress"),
          gripClosed: bool(payload, "grip_closed"),
          holdingRing: bool(payload, "holding_ring"),
          trialIndex: int(payload, "trial_index"),
          day: int(payload, "day"),
        },
      };
    case "event": {
      const data = payload["data"] === undefined ? {} : obj(payload["data"], "data");
      return { seq, msg: { type: "event", kind: str(payload, "kind"), data } };
    }
    default:
      throw new ProtocolError(`unknown message type ${String(envelope["type"])}`);
  }
}
