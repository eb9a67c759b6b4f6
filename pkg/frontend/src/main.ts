/** Browser entry point: wires DOM input to the frame session.
 *
 * Keyboard WASD translates, mouse drag rotates, every accepted reply is
 * decoded and drawn; decode failures skip the frame and log. A top-down
 * inset sketches the shell radii and the motion bound.
 */

import { hudLine, shellSummary } from "./hud.js";
import {
  fetchMeta,
  httpFrameChannel,
  yawPitchToQuaternion,
  type FrameReply,
  type ServerMeta,
} from "./protocol.js";
import { FrameSession } from "./session.js";
import { applyDrag, applyKey, initialState, type ViewerState } from "./state.js";

const FRAME_WIDTH = 640;
const FRAME_HEIGHT = 360;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

function drawShellInset(ctx: CanvasRenderingContext2D, meta: ServerMeta, state: ViewerState): void {
  const size = 120;
  const cx = ctx.canvas.width - size / 2 - 8;
  const cy = size / 2 + 8;
  const outer = meta.shell_boundaries[meta.shell_boundaries.length - 1] ?? 1;
  const scale = (size / 2 - 4) / outer;
  ctx.save();
  ctx.globalAlpha = 0.8;
  ctx.fillStyle = "#10141a";
  ctx.fillRect(cx - size / 2, cy - size / 2, size, size);
  ctx.strokeStyle = "#5a7";
  for (const r of meta.shell_boundaries) {
    ctx.beginPath();
    ctx.arc(cx, cy, r * scale, 0, 2 * Math.PI);
    ctx.stroke();
  }
  ctx.strokeStyle = state.atBound ? "#e55" : "#888";
  ctx.beginPath();
  ctx.arc(cx, cy, state.motionBound * scale, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.fillStyle = "#fff";
  ctx.beginPath();
  // viewer position, seen from above (x right, y up on screen)
  ctx.arc(cx + state.position[0] * scale, cy - state.position[1] * scale, 3, 0, 2 * Math.PI);
  ctx.fill();
  ctx.restore();
}

async function drawReply(
  ctx: CanvasRenderingContext2D,
  reply: FrameReply,
  meta: ServerMeta,
  state: ViewerState,
): Promise<void> {
  if (reply.bytes === undefined) {
    return;
  }
  try {
    const blob = new Blob([reply.bytes.buffer as ArrayBuffer], { type: "image/png" });
    const image = await createImageBitmap(blob);
    ctx.drawImage(image, 0, 0, ctx.canvas.width, ctx.canvas.height);
    image.close();
  } catch (err) {
    console.warn(`skipping undecodable frame ${reply.requestId}`, err);
    return;
  }
  drawShellInset(ctx, meta, state);
}

async function start(): Promise<void> {
  const canvas = el<HTMLCanvasElement>("view");
  const hud = el<HTMLDivElement>("hud");
  const banner = el<HTMLDivElement>("banner");
  const retry = el<HTMLButtonElement>("retry");
  const shells = el<HTMLDivElement>("shells");
  const ctx = canvas.getContext("2d");
  if (ctx === null) {
    throw new Error("2d canvas unavailable");
  }
  canvas.width = FRAME_WIDTH;
  canvas.height = FRAME_HEIGHT;
  const baseUrl = window.location.origin;

  let meta: ServerMeta;
  try {
    meta = await fetchMeta(baseUrl);
  } catch {
    banner.textContent = `cannot reach ${baseUrl} - is the frame server running?`;
    banner.hidden = false;
    retry.hidden = false;
    retry.onclick = () => {
      banner.hidden = true;
      retry.hidden = true;
      void start();
    };
    return;
  }

  const state = initialState(meta.motion_bound);
  shells.textContent = shellSummary(meta);

  const session = new FrameSession(
    httpFrameChannel(baseUrl, (reply) => session.handleReply(reply)),
    { width: FRAME_WIDTH, height: FRAME_HEIGHT, focal: FRAME_WIDTH / 2 },
    {
      onFrame: (reply) => {
        state.latestFrameId = reply.requestId;
        void drawReply(ctx, reply, meta, state);
        hud.textContent = hudLine(state, reply.latencyMs);
      },
      onError: (reply) => {
        if (reply.status === 0) {
          banner.textContent = "connection lost - retrying on next input";
          banner.hidden = false;
        }
      },
    },
  );

  const requestFrame = (): void => {
    banner.hidden = true;
    session.request({
      position: [...state.position],
      orientation: yawPitchToQuaternion(state.yaw, state.pitch),
    });
    hud.textContent = hudLine(state, session.lastLatencyMs);
  };

  window.addEventListener("keydown", (ev) => {
    if (applyKey(state, ev.key)) {
      ev.preventDefault();
      requestFrame();
    }
  });

  let dragging = false;
  canvas.addEventListener("mousedown", () => {
    dragging = true;
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  window.addEventListener("mousemove", (ev) => {
    if (dragging) {
      applyDrag(state, ev.movementX, ev.movementY);
      requestFrame();
    }
  });

  requestFrame();
}

void start();
