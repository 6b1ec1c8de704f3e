/** Frame streaming with one frame in flight.
 *
 * A fresh frame is captured immediately before each send (camera-side
 * keep-latest), sequence numbers strictly increase, and the next send
 * waits for the matching detections reply or a 500 ms timeout, then for
 * the next capture slot of the configured fps.  A silent server therefore
 * throttles the loop to at most two frames per second.
 */

import { Clock, TimerHandle, realClock } from "./clock.js";

export const REPLY_TIMEOUT_MS = 500;

export interface FrameSource {
  /** Encoded JPEG of the current camera frame, base64. */
  capture(): string;
}

export interface FrameSender {
  send(msg: { type: "frame"; seq: number; ts_ms: number; jpeg_b64: string }): void;
}

export class StreamLoop {
  private seq = 0;
  private inFlightSeq: number | null = null;
  private lastSendAt = -Infinity;
  private replyTimer: TimerHandle | null = null;
  private paceTimer: TimerHandle | null = null;
  private running = false;

  constructor(
    private source: FrameSource,
    private sender: FrameSender,
    private fps: number,
    private clock: Clock = realClock,
  ) {
    if (fps < 1 || fps > 15) throw new Error(`fps must be within [1, 15], got ${fps}`);
  }

  start(): void {
    if (this.running) return;
    this.running = true;
    this.sendFrame();
  }

  stop(): void {
    this.running = false;
    if (this.replyTimer !== null) this.clock.clearTimeout(this.replyTimer);
    if (this.paceTimer !== null) this.clock.clearTimeout(this.paceTimer);
    this.replyTimer = null;
    this.paceTimer = null;
  }

  /** Feed every detections message here; unrelated seqs are ignored. */
  onDetections(seq: number): void {
    if (!this.running || seq !== this.inFlightSeq) return;
    this.clearReplyTimer();
    this.inFlightSeq = null;
    this.scheduleNext();
  }

  private clearReplyTimer(): void {
    if (this.replyTimer !== null) {
      this.clock.clearTimeout(this.replyTimer);
      this.replyTimer = null;
    }
  }

  private sendFrame(): void {
    if (!this.running) return;
    this.seq += 1;
    this.inFlightSeq = this.seq;
    this.lastSendAt = this.clock.now();
    this.sender.send({
      type: "frame",
      seq: this.seq,
      ts_ms: Math.round(this.clock.now()),
      jpeg_b64: this.source.capture(),
    });
    this.replyTimer = this.clock.setTimeout(() => {
      // server silent: give up on this reply and pace from the timeout
      this.replyTimer = null;
      this.inFlightSeq = null;
      this.scheduleNext();
    }, REPLY_TIMEOUT_MS);
  }

  private scheduleNext(): void {
    if (!this.running) return;
    const slot = 1000 / this.fps;
    const wait = Math.max(0, this.lastSendAt + slot - this.clock.now());
    this.paceTimer = this.clock.setTimeout(() => {
      this.paceTimer = null;
      this.sendFrame();
    }, wait);
  }
}
