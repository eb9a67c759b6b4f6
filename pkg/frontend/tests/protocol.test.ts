import { describe, expect, it } from "vitest";

import {
  fetchMeta,
  httpFrameChannel,
  yawPitchToQuaternion,
  type FrameReply,
  type FrameRequest,
  type ServerMeta,
} from "../src/protocol.js";

// frozen with the rendering package's pose math: quaternions round-trip
// through its quaternion-to-matrix converter back to the same rotation
const QUAT_CASES: Array<{ yaw: number; pitch: number; q: [number, number, number, number] }> = [
  { yaw: 0.0, pitch: 0.0, q: [0.5, -0.5, 0.5, -0.5] },
  { yaw: Math.PI / 2, pitch: 0.0, q: [0.707106781186548, -0.707106781186547, 0.0, 0.0] },
  {
    yaw: 0.7,
    pitch: 0.2,
    q: [0.701938977910938, -0.5739255308036, 0.266973443799707, -0.326521571549077],
  },
  {
    yaw: -2.1,
    pitch: -0.35,
    q: [0.149904490505274, -0.214298764349955, -0.790901348668599, 0.553244737886072],
  },
  {
    yaw: 3.0,
    pitch: 1.2,
    q: [0.742409667459769, -0.139240402513813, -0.120799699189105, 0.644086507113671],
  },
];

describe("yawPitchToQuaternion", () => {
  it("matches the frozen reference values", () => {
    for (const { yaw, pitch, q } of QUAT_CASES) {
      const got = yawPitchToQuaternion(yaw, pitch);
      for (let i = 0; i < 4; i++) {
        expect(got[i]).toBeCloseTo(q[i]!, 12);
      }
    }
  });

  it("always returns a unit quaternion with w >= 0", () => {
    for (let yaw = -3.1; yaw <= 3.1; yaw += 0.37) {
      for (let pitch = -1.35; pitch <= 1.35; pitch += 0.27) {
        const [w, x, y, z] = yawPitchToQuaternion(yaw, pitch);
        expect(Math.hypot(w, x, y, z)).toBeCloseTo(1.0, 12);
        expect(w).toBeGreaterThanOrEqual(0);
      }
    }
  });
});

const META: ServerMeta = {
  format: "shell-panorama",
  layers: 5,
  width: 2560,
  height: 640,
  v_fov_slope: 0.45,
  shell_radii: [1.9, 2.9, 4.0, 5.5, 7.5],
  shell_boundaries: [1.6, 2.3, 3.4, 4.7, 6.3, 9.0],
  motion_bound: 1.6,
  max_width: 1920,
  max_height: 1080,
};

describe("fetchMeta", () => {
  it("parses the metadata document", async () => {
    let url = "";
    const meta = await fetchMeta("http://srv", async (u) => {
      url = u;
      return new Response(JSON.stringify(META), { status: 200 });
    });
    expect(url).toBe("http://srv/meta");
    expect(meta.layers).toBe(5);
    expect(meta.shell_radii).toHaveLength(5);
    expect(meta.motion_bound).toBeCloseTo(1.6, 12);
  });

  it("throws on a non-ok status", async () => {
    await expect(
      fetchMeta("http://srv", async () => new Response("nope", { status: 500 })),
    ).rejects.toThrow("500");
  });
});

function frameRequest(id: number): FrameRequest {
  return {
    frame_id: id,
    position: [0.1, 0, 0],
    orientation: [0.5, -0.5, 0.5, -0.5],
    mode: "perspective",
    width: 640,
    height: 360,
    focal: 320,
  };
}

describe("httpFrameChannel", () => {
  it("posts the wire field names and surfaces PNG replies", async () => {
    const replies: FrameReply[] = [];
    let body = "";
    const bytes = new Uint8Array([0x89, 0x50, 0x4e, 0x47]);
    const channel = httpFrameChannel(
      "http://srv",
      (r) => replies.push(r),
      async (url, init) => {
        expect(url).toBe("http://srv/frame");
        body = String(init?.body);
        return new Response(bytes, { status: 200, headers: { "x-frame-id": "7" } });
      },
      () => 100,
    );
    channel.send(frameRequest(7));
    await new Promise((resolve) => setTimeout(resolve, 0));
    const sent = JSON.parse(body);
    expect(Object.keys(sent).sort()).toEqual(
      ["focal", "frame_id", "height", "mode", "orientation", "position", "width"],
    );
    expect(sent.frame_id).toBe(7);
    expect(replies).toHaveLength(1);
    expect(replies[0]!.ok).toBe(true);
    expect(replies[0]!.requestId).toBe(7);
    expect(Array.from(replies[0]!.bytes!)).toEqual(Array.from(bytes));
  });

  it("maps protocol rejections and network failures to not-ok replies", async () => {
    const replies: FrameReply[] = [];
    const channel = httpFrameChannel(
      "http://srv",
      (r) => replies.push(r),
      async () =>
        new Response(JSON.stringify({ error: "stale frame id", frame_id: 3, latest: 9 }), {
          status: 409,
        }),
    );
    channel.send(frameRequest(3));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(replies[0]!.ok).toBe(false);
    expect(replies[0]!.status).toBe(409);
    expect(replies[0]!.requestId).toBe(3);

    const failing = httpFrameChannel(
      "http://srv",
      (r) => replies.push(r),
      async () => {
        throw new Error("connection refused");
      },
    );
    failing.send(frameRequest(4));
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(replies[1]!.ok).toBe(false);
    expect(replies[1]!.status).toBe(0);
    expect(replies[1]!.requestId).toBe(4);
  });
});
