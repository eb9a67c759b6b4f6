/** Frame delivery session: one request in flight, newest pose wins.
 *
 * The display guard is independent of arrival order: a reply is shown
 * only when its frame id is strictly greater than everything already
 * shown, so duplicated or delayed responses can never regress the
 * display. Frame ids are assigned when a request is dispatched, which
 * keeps the id sequence strictly increasing even when input bursts are
 * coalesced into a single request.
 */

import type { FrameChannel, FrameReply, FrameRequest, Quaternion } from "./protocol.js";

export interface PoseSnapshot {
  position: [number, number, number];
  orientation: Quaternion;
}

export interface FrameSize {
  width: number;
  height: number;
  focal: number;
}

export interface SessionEvents {
  onFrame(reply: FrameReply): void;
  onError?(reply: FrameReply): void;
}

export class FrameSession {
  latestDisplayed = -1;
  lastLatencyMs = 0;
  droppedStale = 0;

  private nextId = 0;
  private inFlightId: number | null = null;
  private pending: PoseSnapshot | null = null;

  constructor(
    private readonly channel: FrameChannel,
    private readonly size: FrameSize,
    private readonly events: SessionEvents,
  ) {}

  get inFlight(): boolean {
    return this.inFlightId !== null;
  }

  /** Request a frame for the pose; coalesces while one is in flight. */
  request(pose: PoseSnapshot): void {
    if (this.inFlightId !== null) {
      this.pending = pose;
      return;
    }
    this.dispatch(pose);
  }

  /** Feed one server reply; safe to call in any order, any number of
   * times per request. */
  handleReply(reply: FrameReply): void {
    if (reply.requestId === this.inFlightId) {
      this.inFlightId = null;
    }
    if (reply.ok && reply.requestId > this.latestDisplayed) {
      this.latestDisplayed = reply.requestId;
      this.lastLatencyMs = reply.latencyMs;
      this.events.onFrame(reply);
    } else if (reply.ok) {
      this.droppedStale += 1;
    } else {
      this.events.onError?.(reply);
    }
    if (this.inFlightId === null && this.pending !== null) {
      const pose = this.pending;
      this.pending = null;
      this.dispatch(pose);
    }
  }

  private dispatch(pose: PoseSnapshot): void {
    const req: FrameRequest = {
      frame_id: this.nextId++,
      position: pose.position,
      orientation: pose.orientation,
      mode: "perspective",
      width: this.size.width,
      height: this.size.height,
      focal: this.size.focal,
    };
    this.inFlightId = req.frame_id;
    this.channel.send(req);
  }
}
