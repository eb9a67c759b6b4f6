/** Pure formatting for the heads-up display. */

import type { ServerMeta } from "./protocol.js";
import type { ViewerState } from "./state.js";

export function hudLine(state: ViewerState, latencyMs: number): string {
  const [x, y, z] = state.position;
  const pos = `(${x.toFixed(3)}, ${y.toFixed(3)}, ${z.toFixed(3)})`;
  const angles = `yaw ${state.yaw.toFixed(3)} pitch ${state.pitch.toFixed(3)}`;
  const bound = state.atBound ? " [at motion bound]" : "";
  return `pos ${pos} ${angles} | frame ${state.latestFrameId} | ${latencyMs.toFixed(0)} ms${bound}`;
}

export function shellSummary(meta: ServerMeta): string {
  const radii = meta.shell_radii.map((r) => r.toFixed(2)).join(", ");
  return `${meta.layers} shells at radii ${radii} m | motion bound ${meta.motion_bound.toFixed(2)} m`;
}
