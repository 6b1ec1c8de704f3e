/** Serialized speech output.
 *
 * Utterances never interleave: new events queue behind the current one.
 * When an announcement finishes speaking, the server is told via the
 * `played` message so the ledger arms for double taps.  In muted mode the
 * visual banner stands in for audio and `played` is still sent after a
 * fixed display time, keeping the interaction usable without sound.
 */

import { Clock, realClock } from "./clock.js";

export interface SpeechEngine {
  speak(text: string, onEnd: () => void): void;
}

export interface SpeechItem {
  text: string;
  /** class name when this is a detection announcement */
  announceCls?: string;
}

const MUTED_BANNER_MS = 1200;

export class SpeechQueue {
  private queue: SpeechItem[] = [];
  private busy = false;
  muted = false;

  constructor(
    private engine: SpeechEngine,
    private onPlayed: (cls: string) => void,
    private clock: Clock = realClock,
    private onShow: (text: string) => void = () => {},
  ) {}

  enqueue(item: SpeechItem): void {
    this.queue.push(item);
    if (!this.busy) this.next();
  }

  private next(): void {
    const item = this.queue.shift();
    if (!item) {
      this.busy = false;
      return;
    }
    this.busy = true;
    this.onShow(item.text);
    const finish = () => {
      if (item.announceCls) this.onPlayed(item.announceCls);
      this.next();
    };
    if (this.muted) {
      this.clock.setTimeout(finish, MUTED_BANNER_MS);
    } else {
      this.engine.speak(item.text, finish);
    }
  }
}

/** Web Speech API adapter used by the app shell. */
export function browserSpeechEngine(rate = 1.0, volume = 1.0): SpeechEngine {
  return {
    speak(text, onEnd) {
      const utterance = new SpeechSynthesisUtterance(text);
      utterance.rate = rate;
      utterance.volume = volume;
      utterance.onend = () => onEnd();
      utterance.onerror = () => onEnd();
      speechSynthesis.speak(utterance);
    },
  };
}
