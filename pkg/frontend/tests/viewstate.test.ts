import { describe, expect, it } from "vitest";
import type { StateUpdate, Vec3 } from "../src/protocol";
import { ViewState } from "../src/viewstate";

function state(ring: Vec3, overrides: Partial<StateUpdate> = {}): StateUpdate {
  return {
    type: "state",
    phase: "running",
    simTime: 0,
    elapsed: 0,
    ringPosition: ring,
    ringRotation: [1, 0, 0, 0],
    instrumentPosition: ring,
    instrumentRotation: [1, 0, 0, 0],
    color: 1,
    deviationMm: 0,
    angDeviation: 0,
    sStar: 0,
    progress: 0,
    gripClosed: false,
    holdingRing: false,
    trialIndex: 1,
    day: 1,
    ...overrides,
  };
}

describe("ViewState", () => {
  it("returns null before any snapshot", () => {
    expect(new ViewState().poseAt(0)).toBeNull();
  });

  it("interpolates positions between the two most recent snapshots", () => {
    const v = new ViewState();
    v.push(state([0, 0, 0]), 1000);
    v.push(state([0.1, 0, 0]), 1100);
    // Render time runs one interval behind: at 1100 show the older snapshot.
    expect(v.poseAt(1100)!.ringPosition[0]).toBeCloseTo(0, 12);
    expect(v.poseAt(1150)!.ringPosition[0]).toBeCloseTo(0.05, 12);
    expect(v.poseAt(1200)!.ringPosition[0]).toBeCloseTo(0.1, 12);
  });

  it("slerps ring rotation through the shortest arc", () => {
    const v = new ViewState();
    v.push(state([0, 0, 0]), 0);
    v.push(state([0, 0, 0], { ringRotation: [Math.SQRT1_2, 0, 0, Math.SQRT1_2] }), 100);
    const q = v.poseAt(150)!.ringRotation; // halfway: 45 degrees about z
    expect(q[0]).toBeCloseTo(Math.cos(Math.PI / 8), 10);
    expect(q[3]).toBeCloseTo(Math.sin(Math.PI / 8), 10);
    expect(Math.hypot(q[0], q[1], q[2], q[3])).toBeCloseTo(1, 12);
  });

  it("never extrapolates: pose freezes at the newest snapshot", () => {
    const v = new ViewState();
    v.push(state([0, 0, 0]), 0);
    v.push(state([0.1, 0, 0]), 100);
    for (const late of [200, 500, 10_000]) {
      expect(v.poseAt(late)!.ringPosition).toEqual([0.1, 0, 0]);
    }
  });

  it("flags a stalled stream after 100 ms", () => {
    const v = new ViewState();
    v.push(state([0, 0, 0]), 0);
    expect(v.isStale(50)).toBe(false);
    expect(v.isStale(101)).toBe(true);
  });

  it("survives a 500 ms gap without crashing and resumes cleanly", () => {
    const v = new ViewState();
    v.push(state([0, 0, 0]), 0);
    v.push(state([0.01, 0, 0]), 16);
    for (let t = 16; t <= 516; t += 16) expect(v.poseAt(t)).not.toBeNull();
    v.push(state([0.02, 0, 0]), 516);
    expect(v.poseAt(532)!.ringPosition[0]).toBeGreaterThan(0.01);
  });
});
