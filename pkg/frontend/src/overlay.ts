/** Detection overlay drawing: boxes with labels over the live preview and
 * a progress ring showing how close the stabilizer is to announcing. */

import { BoxMsg } from "./wire.js";

export interface CandidateProgress {
  cls: string | null;
  startedAt: number;
  windowMs: number;
}

/** 0..1 fill of the announce ring. */
export function progressFraction(candidate: CandidateProgress, now: number): number {
  if (!candidate.cls) return 0;
  return Math.min(1, Math.max(0, (now - candidate.startedAt) / candidate.windowMs));
}

export function drawDetections(
  ctx: CanvasRenderingContext2D,
  boxes: BoxMsg[],
  scaleX: number,
  scaleY: number,
): void {
  ctx.lineWidth = 4;
  ctx.font = "bold 28px system-ui, sans-serif";
  for (const box of boxes) {
    const [x1, y1, x2, y2] = box.xyxy;
    ctx.strokeStyle = "#ffd400";
    ctx.fillStyle = "#ffd400";
    ctx.strokeRect(x1 * scaleX, y1 * scaleY, (x2 - x1) * scaleX, (y2 - y1) * scaleY);
    ctx.fillText(`${box.cls} ${(box.conf * 100).toFixed(0)}%`, x1 * scaleX + 6, Math.max(30, y1 * scaleY - 8));
  }
}

export function drawProgressRing(
  ctx: CanvasRenderingContext2D,
  cx: number,
  cy: number,
  radius: number,
  fraction: number,
): void {
  ctx.lineWidth = 10;
  ctx.strokeStyle = "rgba(255,255,255,0.25)";
  ctx.beginPath();
  ctx.arc(cx, cy, radius, 0, Math.PI * 2);
  ctx.stroke();
  if (fraction > 0) {
    ctx.strokeStyle = fraction >= 1 ? "#2bd45e" : "#ffd400";
    ctx.beginPath();
    ctx.arc(cx, cy, radius, -Math.PI / 2, -Math.PI / 2 + fraction * Math.PI * 2);
    ctx.stroke();
  }
}
