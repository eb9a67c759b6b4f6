/** Wire types and math for the pose/frame protocol.
 *
 * Field names mirror the server exactly: snake_case JSON, orientation as
 * a camera-to-world unit quaternion (w, x, y, z), world up = +z, yaw 0
 * facing +x and increasing counterclockwise, pitch > 0 looking up.
 */

export interface ServerMeta {
  format: string;
  layers: number;
  width: number;
  height: number;
  v_fov_slope: number;
  shell_radii: number[];
  shell_boundaries: number[];
  motion_bound: number;
  max_width: number;
  max_height: number;
}

export interface FrameRequest {
  frame_id: number;
  position: [number, number, number];
  orientation: [number, number, number, number];
  mode: "perspective" | "panorama";
  width: number;
  height: number;
  focal: number;
}

/** One server response as seen by the session: `requestId` is the frame
 * id this reply answers (from the X-Frame-Id header or the request
 * itself), `status` the HTTP code, `bytes` the PNG payload when ok. */
export interface FrameReply {
  requestId: number;
  status: number;
  ok: boolean;
  bytes?: Uint8Array;
  latencyMs: number;
}

export type Quaternion = [number, number, number, number];

/** Camera-to-world quaternion for (yaw, pitch), up = +z, w kept >= 0.
 * Columns of the equivalent matrix are [right, down, forward] with
 * forward = (cos p cos y, cos p sin y, sin p). */
export function yawPitchToQuaternion(yaw: number, pitch: number): Quaternion {
  const cp = Math.cos(pitch);
  const fx = cp * Math.cos(yaw);
  const fy = cp * Math.sin(yaw);
  const fz = Math.sin(pitch);
  const rx = Math.sin(yaw);
  const ry = -Math.cos(yaw);
  const rz = 0;
  const dx = fy * rz - fz * ry;
  const dy = fz * rx - fx * rz;
  const dz = fx * ry - fy * rx;
  // rotation with columns [right, down, forward], Shepperd's method
  const m00 = rx, m01 = dx, m02 = fx;
  const m10 = ry, m11 = dy, m12 = fy;
  const m20 = rz, m21 = dz, m22 = fz;
  const t = m00 + m11 + m22;
  let q: Quaternion;
  if (t > 0) {
    const s = Math.sqrt(t + 1.0) * 2;
    q = [0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s];
  } else if (m00 > m11 && m00 > m22) {
    const s = Math.sqrt(1.0 + m00 - m11 - m22) * 2;
    q = [(m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s];
  } else if (m11 > m22) {
    const s = Math.sqrt(1.0 + m11 - m00 - m22) * 2;
    q = [(m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s];
  } else {
    const s = Math.sqrt(1.0 + m22 - m00 - m11) * 2;
    q = [(m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s];
  }
  const flip =
    q[0] < 0 ||
    (q[0] === 0 && (q[1] < 0 || (q[1] === 0 && (q[2] < 0 || (q[2] === 0 && q[3] < 0)))));
  return flip ? [-q[0], -q[1], -q[2], -q[3]] : q;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export async function fetchMeta(baseUrl: string, fetchLike: FetchLike = fetch): Promise<ServerMeta> {
  const res = await fetchLike(`${baseUrl}/meta`);
  if (!res.ok) {
    throw new Error(`GET /meta failed with status ${res.status}`);
  }
  return (await res.json()) as ServerMeta;
}

/** Push-style transport: send a request, replies arrive via the callback
 * in whatever order the network delivers them. */
export interface FrameChannel {
  send(req: FrameRequest): void;
}

export function httpFrameChannel(
  baseUrl: string,
  onReply: (reply: FrameReply) => void,
  fetchLike: FetchLike = fetch,
  now: () => number = () => Date.now(),
): FrameChannel {
  return {
    send(req: FrameRequest): void {
      const t0 = now();
      fetchLike(`${baseUrl}/frame`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      })
        .then(async (res) => {
          const header = res.headers.get("x-frame-id");
          const reply: FrameReply = {
            requestId: header !== null ? Number(header) : req.frame_id,
            status: res.status,
            ok: res.ok,
            latencyMs: now() - t0,
          };
          if (res.ok) {
            reply.bytes = new Uint8Array(await res.arrayBuffer());
          }
          onReply(reply);
        })
        .catch(() => {
          // network failure: surface as status 0 so the session can
          // clear its in-flight slot and the UI can show disconnection
          onReply({ requestId: req.frame_id, status: 0, ok: false, latencyMs: now() - t0 });
        });
    },
  };
}
