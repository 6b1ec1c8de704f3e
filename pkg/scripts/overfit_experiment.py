#!/usr/bin/env python3
"""Desk-scale training reproduction: overfit the detection head on the
8-sample synthetic fixture and report the loss curve plus box recovery.

    python scripts/overfit_experiment.py [--epochs 200] [--seed 11]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from cashsight.config import DEFAULT_ANCHORS
from cashsight.head import SCALES, DetectionHead, decode, iou, nms, train_head
from overfit_fixture import build_overfit_fixture


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()

    dataset, gt_list = build_overfit_fixture(seed=args.seed)
    head = DetectionHead(seed=0)
    t0 = time.time()
    history = train_head(head, dataset, DEFAULT_ANCHORS, lr=0.01, batch_size=8, epochs=args.epochs, seed=0)
    elapsed = time.time() - t0

    print(f"trained {args.epochs} full-batch steps in {elapsed:.1f}s")
    print(f"loss: initial {history[0]:.3f}  final {history[-1]:.3f}  ratio {history[-1] / history[0]:.4f}")
    step = max(len(history) // 10, 1)
    for i in range(0, len(history), step):
        bar = "#" * int(40 * history[i] / history[0])
        print(f"  step {i:4d}  {history[i]:8.3f}  {bar}")

    print("\nbox recovery (decode at conf 0.25, NMS 0.45):")
    for i, ((feats, _), (gt_box, gt_cls)) in enumerate(zip(dataset, gt_list)):
        raw = head.forward({s: feats[s][None] for s in SCALES}, training=False)
        dets = nms(decode(raw, DEFAULT_ANCHORS, conf_threshold=0.25), 0.45)
        best = max((iou(d.box, gt_box) for d in dets), default=0.0)
        top = max(dets, key=lambda d: d.confidence, default=None)
        mark = "ok " if best >= 0.8 else "LOW"
        print(f"  [{mark}] sample {i}: IoU {best:.3f}  detections {len(dets)}  top class {top.class_id if top else '-'} (gt {gt_cls})")


if __name__ == "__main__":
    main()
