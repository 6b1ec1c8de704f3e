"""End-to-end frame pipeline: letterbox -> preprocess -> features -> head ->
decode -> NMS, with the three-bucket stage timing (pre / inf / post) that
the bench and the streaming service report."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import imgproc
from .config import Config
from .features import make_provider
from .head import DetectionHead, Detection, decode, nms


@dataclass(frozen=True)
class FrameResult:
    detections: list[Detection]  # boxes in original-frame pixel coordinates
    canvas_detections: list[Detection]  # boxes on the 640x640 canvas
    timing_ms: dict[str, float]


class DetectionPipeline:
    """Immutable after construction; safe to share across session workers."""

    def __init__(self, config: Config | None = None, head: DetectionHead | None = None, provider=None):
        self.config = config or Config()
        hc = self.config.head
        fc = self.config.features
        self.provider = provider or make_provider(fc.source, seed=fc.seed, path=fc.dir, p5_channels=hc.p5_channels)
        if head is None:
            head = DetectionHead(
                in_channels={"P3": 64, "P4": 128, "P5": hc.p5_channels},
                seed=hc.init_seed,
            )
            if hc.params_path:
                head.load(hc.params_path)
        self.head = head
        self.anchors = {s: [tuple(a) for a in hc.anchors[s]] for s in ("P3", "P4", "P5")}

    def process(self, frame_bgr: np.ndarray) -> FrameResult:
        pc = self.config.preprocess
        t0 = time.perf_counter()
        canvas, tf = imgproc.letterbox_square(frame_bgr, target=640, pad_value=255)
        if pc.enabled:
            canvas = imgproc.preprocess_pipeline(
                canvas, kernel_size=pc.gaussian_kernel, clip_limit=pc.clahe_clip, tiles=pc.clahe_tiles
            )
        t1 = time.perf_counter()
        feats = self.provider.extract(canvas)
        raw = self.head.forward(feats.as_dict(), training=False)
        t2 = time.perf_counter()
        dets = decode(raw, self.anchors, conf_threshold=self.config.head.conf_threshold)
        dets = nms(dets, iou_threshold=self.config.head.nms_iou)
        frame_dets = [Detection(tf.inverse_box(d.box), d.class_id, d.confidence) for d in dets]
        t3 = time.perf_counter()

        timing = {
            "pre": round((t1 - t0) * 1000.0, 3),
            "inf": round((t2 - t1) * 1000.0, 3),
            "post": round((t3 - t2) * 1000.0, 3),
            "total": round((t3 - t0) * 1000.0, 3),
        }
        return FrameResult(frame_dets, dets, timing)


def bench(pipeline: DetectionPipeline, frames: int = 20, seed: int = 0) -> dict[str, dict[str, float]]:
    """Run synthetic frames through the pipeline and aggregate stage times.

    Returns {stage: {mean, p50, p95}} in milliseconds.
    """
    rng = np.random.default_rng(seed)
    samples: dict[str, list[float]] = {"pre": [], "inf": [], "post": [], "total": []}
    for _ in range(frames):
        frame = rng.integers(0, 256, size=(480, 640, 3), dtype=np.uint8)
        result = pipeline.process(frame)
        for stage, value in result.timing_ms.items():
            samples[stage].append(value)
    out = {}
    for stage, values in samples.items():
        arr = np.asarray(values)
        out[stage] = {
            "mean": float(arr.mean()),
            "p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95)),
        }
    return out


def format_bench(stats: dict[str, dict[str, float]]) -> str:
    """The three-bucket report: pre / inf / post plus total, one line each."""
    lines = ["stage    mean_ms    p50_ms    p95_ms"]
    for stage in ("pre", "inf", "post", "total"):
        s = stats[stage]
        lines.append(f"{stage:<8} {s['mean']:>8.2f} {s['p50']:>9.2f} {s['p95']:>9.2f}")
    return "\n".join(lines)
