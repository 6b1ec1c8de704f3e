import { describe, expect, it } from "vitest";

import { SpeechEngine, SpeechQueue } from "../src/speech.js";
import { FakeClock } from "./fakeClock.js";

/** Records calls and lets the test finish utterances explicitly. */
class StubEngine implements SpeechEngine {
  log: string[] = [];
  private pending: Array<() => void> = [];

  speak(text: string, onEnd: () => void): void {
    this.log.push(`speak:${text}`);
    this.pending.push(() => {
      this.log.push(`end:${text}`);
      onEnd();
    });
  }

  finishNext(): void {
    const fn = this.pending.shift();
    if (!fn) throw new Error("nothing speaking");
    fn();
  }
}

function queue() {
  const engine = new StubEngine();
  const clock = new FakeClock();
  const order: string[] = [];
  const q = new SpeechQueue(
    engine,
    (cls) => {
      engine.log.push(`played:${cls}`);
      order.push(cls);
    },
    clock,
  );
  return { engine, clock, order, q };
}

describe("SpeechQueue", () => {
  it("announce utterance finishes before played is sent", () => {
    const { engine, q } = queue();
    q.enqueue({ text: "5 taka", announceCls: "5taka" });
    expect(engine.log).toEqual(["speak:5 taka"]);
    engine.finishNext();
    expect(engine.log).toEqual(["speak:5 taka", "end:5 taka", "played:5taka"]);
  });

  it("never interleaves utterances", () => {
    const { engine, q } = queue();
    q.enqueue({ text: "5 taka", announceCls: "5taka" });
    q.enqueue({ text: "total 5 taka" });
    q.enqueue({ text: "total 10 taka" });
    expect(engine.log).toEqual(["speak:5 taka"]); // the rest wait their turn
    engine.finishNext();
    engine.finishNext();
    engine.finishNext();
    expect(engine.log).toEqual([
      "speak:5 taka",
      "end:5 taka",
      "played:5taka",
      "speak:total 5 taka",
      "end:total 5 taka",
      "speak:total 10 taka",
      "end:total 10 taka",
    ]);
  });

  it("ledger speech does not emit played", () => {
    const { engine, order, q } = queue();
    q.enqueue({ text: "total 5 taka" });
    engine.finishNext();
    expect(order).toEqual([]);
  });

  it("muted mode still sends played after the banner timeout", () => {
    const { engine, clock, order, q } = queue();
    q.muted = true;
    q.enqueue({ text: "100 dollar", announceCls: "100dollar" });
    expect(engine.log).toEqual([]); // no audio in muted mode
    clock.advance(1199);
    expect(order).toEqual([]);
    clock.advance(1);
    expect(order).toEqual(["100dollar"]);
  });
});
