/** Full-screen tap-gesture recognizer.
 *
 * Mirrors the server's vocabulary with the timing constants delivered in
 * the hello message: short presses chain into tap sequences while the gap
 * stays within `tap_gap_ms`; after a quiet period two taps emit a double
 * tap and three a triple; a press held past `hold_ms` emits a long press
 * at the moment the threshold is crossed.  Single taps and runs of four
 * or more emit nothing.
 */

import { Clock, TimerHandle, realClock } from "./clock.js";
import { AssistTiming, GestureKind } from "./wire.js";

export interface GestureEvent {
  kind: GestureKind;
  at: number;
}

export class GestureRecognizer {
  private taps = 0;
  private pressedAt: number | null = null;
  private quietTimer: TimerHandle | null = null;
  private holdTimer: TimerHandle | null = null;
  private holdFired = false;

  constructor(
    private timing: Pick<AssistTiming, "hold_ms" | "tap_gap_ms" | "tap_max_press_ms">,
    private emit: (gesture: GestureEvent) => void,
    private clock: Clock = realClock,
  ) {}

  down(): void {
    if (this.pressedAt !== null) return; // ignore secondary pointers
    if (this.quietTimer !== null) {
      this.clock.clearTimeout(this.quietTimer);
      this.quietTimer = null;
    }
    this.pressedAt = this.clock.now();
    this.holdFired = false;
    this.holdTimer = this.clock.setTimeout(() => {
      this.holdFired = true;
      this.taps = 0;
      this.emit({ kind: "long_press", at: this.clock.now() });
    }, this.timing.hold_ms);
  }

  up(): void {
    if (this.pressedAt === null) return;
    const pressed = this.clock.now() - this.pressedAt;
    this.pressedAt = null;
    if (this.holdTimer !== null) {
      this.clock.clearTimeout(this.holdTimer);
      this.holdTimer = null;
    }
    if (this.holdFired) {
      this.holdFired = false;
      return; // long press already emitted at the crossing
    }
    if (pressed >= this.timing.tap_max_press_ms) {
      this.taps = 0; // between a tap and a hold: not in the vocabulary
      return;
    }
    this.taps += 1;
    this.quietTimer = this.clock.setTimeout(() => this.settle(), this.timing.tap_gap_ms);
  }

  private settle(): void {
    this.quietTimer = null;
    const taps = this.taps;
    this.taps = 0;
    if (taps === 2) this.emit({ kind: "double_tap", at: this.clock.now() });
    else if (taps === 3) this.emit({ kind: "triple_tap", at: this.clock.now() });
  }
}
