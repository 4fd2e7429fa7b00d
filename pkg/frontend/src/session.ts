/**
 * Session flow: Ready screen → StartTrial → running → trial-complete
 * screen with that trial's server-computed metrics, day-complete screen
 * with the server-sent day quartiles, and a final session summary.
 *
 * Thin client: this module never computes a metric. Every number it
 * exposes is copied from a server event; until one arrives the metrics
 * panel is empty.
 */

import type { ControlMessage, EventMessage, StateUpdate } from "./protocol.js";

export type Screen =
  | "connecting"
  | "instructions"
  | "ready"
  | "running"
  | "trial_complete"
  | "day_complete"
  | "session_complete";

export const INSTRUCTION_TEXT =
  "Carry the ring along the wire as accurately and quickly as possible. " +
  "Close the grip to pick the ring up at the start marker; the trial ends " +
  "when the ring reaches the far end.";

export interface MetricRow {
  label: string;
  value: string;
}

const METRIC_LABELS: Array<[string, string, number]> = [
  ["time", "Time (s)", 2],
  ["tpe", "TPE (mm²)", 2],
  ["rpe", "RPE (rad·mm)", 2],
  ["cet", "CET", 1],
];

export class SessionController {
  screen: Screen = "connecting";
  subject = "";
  group = "";
  day = 0;
  trialIndex = 0;
  fieldMode = "";
  abortNotice: string | null = null;
  errorMessage: string | null = null;
  /** Metrics of the last completed trial, verbatim from the server. */
  lastMetrics: Record<string, number> | null = null;
  /** Per-metric [q25, q50, q75] for the completed day, from the server. */
  dayQuartiles: Record<string, number[]> | null = null;

  private readonly sendControl: (msg: ControlMessage) => void;

  constructor(sendControl: (msg: ControlMessage) => void) {
    this.sendControl = sendControl;
  }

  // -- outgoing ------------------------------------------------------------

  connected(): void {
    this.screen = "instructions";
  }

  startSession(): void {
    this.sendControl({ type: "control", verb: "start_session", params: {} });
  }

  startTrial(): void {
    this.abortNotice = null;
    this.sendControl({ type: "control", verb: "start_trial", params: {} });
  }

  abortTrial(): void {
    this.sendControl({ type: "control", verb: "abort_trial", params: {} });
  }

  nextDay(): void {
    this.sendControl({ type: "control", verb: "next_day", params: {} });
  }

  // -- incoming ------------------------------------------------------------

  handleEvent(ev: EventMessage): void {
    const d = ev.data;
    switch (ev.kind) {
      case "session":
        if (typeof d["subject"] === "string") this.subject = d["subject"];
        if (typeof d["group"] === "string") this.group = d["group"];
        if (typeof d["day"] === "number") this.day = d["day"];
        if (typeof d["trial_index"] === "number") this.trialIndex = d["trial_index"];
        if (typeof d["field_mode"] === "string") this.fieldMode = d["field_mode"];
        this.screen = "ready";
        break;
      case "trial_started":
        if (typeof d["day"] === "number") this.day = d["day"];
        if (typeof d["trial_index"] === "number") this.trialIndex = d["trial_index"];
        this.abortNotice = null;
        this.screen = "running";
        break;
      case "trial_completed":
        if (d["metrics"] && typeof d["metrics"] === "object") {
          this.lastMetrics = d["metrics"] as Record<string, number>;
        }
        this.screen = "trial_complete";
        break;
      case "trial_aborted":
        this.abortNotice = typeof d["reason"] === "string" ? d["reason"] : "trial aborted";
        this.screen = "ready";
        break;
      case "day_complete":
        if (d["quartiles"] && typeof d["quartiles"] === "object") {
          this.dayQuartiles = d["quartiles"] as Record<string, number[]>;
        }
        this.screen = "day_complete";
        break;
      case "session_complete":
        this.screen = "session_complete";
        break;
      case "error":
        this.errorMessage = typeof d["message"] === "string" ? d["message"] : "server error";
        break;
      default:
        break; // unknown events are ignored; session stays usable
    }
  }

  handleState(st: StateUpdate): void {
    this.day = st.day;
    this.trialIndex = st.trialIndex;
  }

  // -- display data (server numbers only) ----------------------------------

  metricsPanel(): MetricRow[] {
    if (this.lastMetrics === null) return [];
    const rows: MetricRow[] = [];
    for (const [key, label, digits] of METRIC_LABELS) {
      const v = this.lastMetrics[key];
      if (typeof v === "number") rows.push({ label, value: v.toFixed(digits) });
    }
    return rows;
  }

  quartilesPanel(): MetricRow[] {
    if (this.dayQuartiles === null) return [];
    const rows: MetricRow[] = [];
    for (const [key, label] of METRIC_LABELS) {
      const q = this.dayQuartiles[key];
      if (Array.isArray(q) && q.length === 3) {
        rows.push({
          label,
          value: `${q[1].toFixed(2)} [${q[0].toFixed(2)}–${q[2].toFixed(2)}]`,
        });
      }
    }
    return rows;
  }

  hudText(st: StateUpdate | null): string {
    if (st === null) return "";
    return `t=${st.elapsed.toFixed(1)} s   trial ${st.trialIndex}/20   day ${st.day}/5`;
  }
}
