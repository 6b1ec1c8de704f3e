/** App shell: camera capture, socket wiring, overlay, speech, gestures.
 *
 * The client is a dumb terminal: totals and announcements come only from
 * server messages, and every timing constant is taken from the hello
 * message so client and server always agree.  The whole viewport is the
 * gesture surface; Enter and Space provide keyboard equivalents for
 * desktop testing (Enter x2 = double tap, x3 = triple tap, held Space =
 * long press).
 */

import { GestureRecognizer } from "./gestures.js";
import { CandidateProgress, drawDetections, drawProgressRing, progressFraction } from "./overlay.js";
import { SpeechQueue, browserSpeechEngine } from "./speech.js";
import { FrameSource, StreamLoop } from "./stream.js";
import { DetectionsMsg, HelloMsg, ServerMsg } from "./wire.js";

const CAPTURE_FPS = 10;
const JPEG_QUALITY = 0.7;
const CAPTURE_LONG_SIDE = 640;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class CameraSource implements FrameSource {
  private canvas = document.createElement("canvas");

  constructor(private video: HTMLVideoElement) {}

  capture(): string {
    const vw = this.video.videoWidth || 640;
    const vh = this.video.videoHeight || 480;
    const scale = CAPTURE_LONG_SIDE / Math.max(vw, vh);
    this.canvas.width = Math.round(vw * scale);
    this.canvas.height = Math.round(vh * scale);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("2d context unavailable");
    ctx.drawImage(this.video, 0, 0, this.canvas.width, this.canvas.height);
    const url = this.canvas.toDataURL("image/jpeg", JPEG_QUALITY);
    return url.slice(url.indexOf(",") + 1);
  }
}

async function start(): Promise<void> {
  const video = el<HTMLVideoElement>("preview");
  const overlay = el<HTMLCanvasElement>("overlay");
  const banner = el<HTMLDivElement>("banner");
  const status = el<HTMLDivElement>("status");
  const totalsPanel = el<HTMLDivElement>("totals");

  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
  const socket = new WebSocket(wsUrl);
  const candidate: CandidateProgress = { cls: null, startedAt: 0, windowMs: 3000 };
  let lastBoxes: DetectionsMsg["boxes"] = [];

  const speech = new SpeechQueue(
    browserSpeechEngine(),
    (cls) => socket.send(JSON.stringify({ type: "played", cls })),
    undefined,
    (text) => {
      banner.textContent = text;
      banner.classList.add("visible");
      setTimeout(() => banner.classList.remove("visible"), 2500);
    },
  );

  const hello: HelloMsg = await new Promise((resolve, reject) => {
    socket.onerror = () => reject(new Error("socket failed"));
    socket.onmessage = (event) => {
      const msg = JSON.parse(event.data) as ServerMsg;
      if (msg.type === "hello") resolve(msg);
    };
  });
  candidate.windowMs = hello.config.assist.window_ms;
  status.textContent = `session ${hello.session}`;

  const gestures = new GestureRecognizer(hello.config.assist, (g) => {
    socket.send(JSON.stringify({ type: "gesture", kind: g.kind, ts_ms: Math.round(g.at) }));
  });

  let stream: MediaStream;
  try {
    stream = await navigator.mediaDevices.getUserMedia({ video: { facingMode: "environment" } });
  } catch (err) {
    const text = "camera permission denied";
    status.textContent = text;
    speech.enqueue({ text });
    throw err;
  }
  video.srcObject = stream;
  await video.play();

  const loop = new StreamLoop(new CameraSource(video), { send: (m) => socket.send(JSON.stringify(m)) }, CAPTURE_FPS);

  socket.onmessage = (event) => {
    const msg = JSON.parse(event.data) as ServerMsg;
    switch (msg.type) {
      case "detections": {
        loop.onDetections(msg.seq);
        lastBoxes = msg.boxes;
        const top = msg.boxes[0];
        if (top && top.cls !== candidate.cls) {
          candidate.cls = top.cls;
          candidate.startedAt = performance.now();
        } else if (!top) {
          candidate.cls = null;
        }
        break;
      }
      case "announce":
        speech.enqueue({ text: msg.speech, announceCls: msg.cls });
        break;
      case "ledger": {
        speech.enqueue({ text: msg.speech });
        const t = msg.totals;
        totalsPanel.textContent = `USD ${t.usd} | EUR ${t.eur} | eurocent ${t.eurcent} | BDT ${t.bdt}`;
        break;
      }
      case "error":
        status.textContent = `error: ${msg.code}`;
        break;
      default:
        break;
    }
  };
  socket.onclose = () => {
    status.textContent = "disconnected";
    loop.stop();
  };

  const surface = el<HTMLDivElement>("surface");
  surface.addEventListener("pointerdown", () => gestures.down());
  surface.addEventListener("pointerup", () => gestures.up());
  surface.addEventListener("pointercancel", () => gestures.up());
  let spaceHeld = false;
  document.addEventListener("keydown", (event) => {
    if (event.key === "Enter") {
      gestures.down();
      gestures.up();
    } else if (event.key === " " && !spaceHeld) {
      spaceHeld = true;
      gestures.down();
    }
  });
  document.addEventListener("keyup", (event) => {
    if (event.key === " ") {
      spaceHeld = false;
      gestures.up();
    }
  });

  const ctx = overlay.getContext("2d");
  function render(): void {
    if (ctx) {
      overlay.width = overlay.clientWidth;
      overlay.height = overlay.clientHeight;
      ctx.clearRect(0, 0, overlay.width, overlay.height);
      const sx = overlay.width / (video.videoWidth || overlay.width);
      const sy = overlay.height / (video.videoHeight || overlay.height);
      drawDetections(ctx, lastBoxes, sx, sy);
      drawProgressRing(ctx, overlay.width - 60, 60, 36, progressFraction(candidate, performance.now()));
    }
    requestAnimationFrame(render);
  }
  render();
  loop.start();
}

start().catch((err) => console.error(err));
