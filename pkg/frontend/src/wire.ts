/** Message shapes on the /ws socket, mirrored from the server. */

export interface AssistTiming {
  window_ms: number;
  grace_ms: number;
  min_frames: number;
  conf_threshold: number;
  hold_ms: number;
  tap_gap_ms: number;
  tap_max_press_ms: number;
}

export interface HelloMsg {
  type: "hello";
  session: number;
  config: { assist: AssistTiming; speech: Record<string, string> };
}

export interface BoxMsg {
  cls: string;
  conf: number;
  xyxy: [number, number, number, number];
}

export interface DetectionsMsg {
  type: "detections";
  seq: number;
  boxes: BoxMsg[];
  timing_ms: { pre: number; inf: number; post: number; total: number };
}

export interface AnnounceMsg {
  type: "announce";
  cls: string;
  speech: string;
}

export interface LedgerMsg {
  type: "ledger";
  speech: string;
  totals: { usd: number; eur: number; eurcent: number; bdt: number };
}

export interface DroppedMsg {
  type: "dropped";
  seq: number;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  seq?: number;
}

export type ServerMsg = HelloMsg | DetectionsMsg | AnnounceMsg | LedgerMsg | DroppedMsg | ErrorMsg;

export type GestureKind = "double_tap" | "triple_tap" | "long_press";

export interface FrameMsg {
  type: "frame";
  seq: number;
  ts_ms: number;
  jpeg_b64: string;
}

export interface GestureMsg {
  type: "gesture";
  kind: GestureKind;
  ts_ms: number;
}

export interface PlayedMsg {
  type: "played";
  cls: string;
}

export type ClientMsg = FrameMsg | GestureMsg | PlayedMsg;
