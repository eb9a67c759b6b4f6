import { describe, expect, it } from "vitest";

import {
  MOVE_STEP,
  PITCH_LIMIT,
  applyDrag,
  applyKey,
  clampToBound,
  forwardVector,
  initialState,
  rightVector,
} from "../src/state.js";

// frozen with the rendering package's pose math
const FORWARD_07_02 = [0.749596265080519, 0.631376224115843, 0.198669330795061];

describe("view directions", () => {
  it("forward at yaw 0 pitch 0 points along +x", () => {
    const f = forwardVector(0, 0);
    expect(f[0]).toBeCloseTo(1, 12);
    expect(f[1]).toBeCloseTo(0, 12);
    expect(f[2]).toBeCloseTo(0, 12);
  });

  it("forward matches the frozen reference direction", () => {
    const f = forwardVector(0.7, 0.2);
    for (let i = 0; i < 3; i++) {
      expect(f[i]).toBeCloseTo(FORWARD_07_02[i]!, 12);
    }
  });

  it("right at yaw 0 points along -y and stays horizontal", () => {
    const r = rightVector(0);
    expect(r[0]).toBeCloseTo(0, 12);
    expect(r[1]).toBeCloseTo(-1, 12);
    expect(r[2]).toBe(0);
  });
});

describe("applyKey", () => {
  it("w advances along the view direction by one step", () => {
    const state = initialState(5.0);
    state.yaw = 0.7;
    state.pitch = 0.2;
    expect(applyKey(state, "w")).toBe(true);
    for (let i = 0; i < 3; i++) {
      expect(state.position[i]).toBeCloseTo(MOVE_STEP * FORWARD_07_02[i]!, 12);
    }
  });

  it("s retreats and a/d strafe against/along the right vector", () => {
    const state = initialState(5.0);
    applyKey(state, "s");
    expect(state.position[0]).toBeCloseTo(-MOVE_STEP, 12);
    const strafed = initialState(5.0);
    applyKey(strafed, "d");
    expect(strafed.position[1]).toBeCloseTo(-MOVE_STEP, 12);
    applyKey(strafed, "a");
    expect(strafed.position[1]).toBeCloseTo(0, 12);
  });

  it("ignores unmapped keys", () => {
    const state = initialState(5.0);
    expect(applyKey(state, "q")).toBe(false);
    expect(state.position).toEqual([0, 0, 0]);
  });

  it("clamps walking to the motion bound and flags it", () => {
    const bound = 3 * MOVE_STEP + 0.01;
    const state = initialState(bound);
    for (let i = 0; i < 10; i++) {
      applyKey(state, "w");
      expect(Math.hypot(...state.position)).toBeLessThanOrEqual(bound + 1e-12);
    }
    expect(Math.hypot(...state.position)).toBeCloseTo(bound, 12);
    expect(state.atBound).toBe(true);
    applyKey(state, "s");
    expect(state.atBound).toBe(false);
  });
});

describe("applyDrag", () => {
  it("dragging right decreases yaw", () => {
    const state = initialState(5.0);
    applyDrag(state, 40, 0, 0.005);
    expect(state.yaw).toBeCloseTo(-0.2, 12);
    expect(state.pitch).toBe(0);
  });

  it("dragging up looks up and pitch clamps at the limit", () => {
    const state = initialState(5.0);
    applyDrag(state, 0, -10, 0.005);
    expect(state.pitch).toBeCloseTo(0.05, 12);
    applyDrag(state, 0, -1e6, 0.005);
    expect(state.pitch).toBe(PITCH_LIMIT);
    applyDrag(state, 0, 1e7, 0.005);
    expect(state.pitch).toBe(-PITCH_LIMIT);
  });
});

describe("clampToBound", () => {
  it("scales an escaping position back onto the sphere", () => {
    const { position, clamped } = clampToBound([3, 4, 0], 2.5);
    expect(clamped).toBe(true);
    expect(Math.hypot(...position)).toBeCloseTo(2.5, 12);
    expect(position[0] / position[1]!).toBeCloseTo(0.75, 12);
  });

  it("leaves interior positions alone", () => {
    const { position, clamped } = clampToBound([0.1, -0.2, 0.05], 2.5);
    expect(clamped).toBe(false);
    expect(position).toEqual([0.1, -0.2, 0.05]);
  });
});
