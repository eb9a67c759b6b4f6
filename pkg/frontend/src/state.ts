/** Viewer pose state and the input rules that mutate it.
 *
 * Invariants held here: the position never leaves the motion bound
 * (clamped, with `atBound` raised for the UI), and pitch stays clear of
 * straight up/down where the image roll is undefined.
 */

export type Vec3 = [number, number, number];

export type ConnectionStatus = "connecting" | "connected" | "error";

export interface ViewerState {
  position: Vec3;
  yaw: number;
  pitch: number;
  motionBound: number;
  latestFrameId: number;
  status: ConnectionStatus;
  atBound: boolean;
}

export const MOVE_STEP = 0.05; // meters per key press
export const ROTATE_SPEED = 0.005; // radians per dragged pixel
export const PITCH_LIMIT = 1.35; // radians, keeps roll well defined

export function initialState(motionBound: number): ViewerState {
  return {
    position: [0, 0, 0],
    yaw: 0,
    pitch: 0,
    motionBound,
    latestFrameId: -1,
    status: "connected",
    atBound: false,
  };
}

/** View direction for (yaw, pitch): unit length, up = +z. */
export function forwardVector(yaw: number, pitch: number): Vec3 {
  const cp = Math.cos(pitch);
  return [cp * Math.cos(yaw), cp * Math.sin(yaw), Math.sin(pitch)];
}

/** Screen-right direction: horizontal, perpendicular to the view. */
export function rightVector(yaw: number): Vec3 {
  return [Math.sin(yaw), -Math.cos(yaw), 0];
}

/** Scale the position back onto the bound sphere when it escapes. */
export function clampToBound(position: Vec3, bound: number): { position: Vec3; clamped: boolean } {
  const n = Math.hypot(position[0], position[1], position[2]);
  if (n <= bound) {
    return { position, clamped: false };
  }
  const s = bound / n;
  return { position: [position[0] * s, position[1] * s, position[2] * s], clamped: true };
}

const KEY_MOVES: Record<string, { axis: "forward" | "right"; sign: number }> = {
  w: { axis: "forward", sign: 1 },
  s: { axis: "forward", sign: -1 },
  d: { axis: "right", sign: 1 },
  a: { axis: "right", sign: -1 },
};

/** WASD translation along the current view frame; returns false for keys
 * the viewer does not handle. */
export function applyKey(state: ViewerState, key: string, step: number = MOVE_STEP): boolean {
  const move = KEY_MOVES[key.toLowerCase()];
  if (move === undefined) {
    return false;
  }
  const dir = move.axis === "forward"
    ? forwardVector(state.yaw, state.pitch)
    : rightVector(state.yaw);
  const raw: Vec3 = [
    state.position[0] + move.sign * step * dir[0],
    state.position[1] + move.sign * step * dir[1],
    state.position[2] + move.sign * step * dir[2],
  ];
  const { position, clamped } = clampToBound(raw, state.motionBound);
  state.position = position;
  state.atBound = clamped;
  return true;
}

/** Mouse-drag rotation: dragging right turns the view clockwise (yaw
 * decreases), dragging down looks down. dx/dy in pixels. */
export function applyDrag(state: ViewerState, dx: number, dy: number, speed: number = ROTATE_SPEED): void {
  state.yaw -= dx * speed;
  state.pitch = Math.min(PITCH_LIMIT, Math.max(-PITCH_LIMIT, state.pitch - dy * speed));
}
