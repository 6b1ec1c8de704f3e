"""Command line entry points.

Subcommands: ``serve``, ``detect``, ``eval``, ``prep``, ``bench``,
``anchors``.  Exit codes: 0 success, 2 usage/config errors, 1 runtime
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from PIL import Image

from . import datakit, imageio, imgproc, metrics
from .config import Config, load_config
from .head import Detection, kmeans_anchors
from .pipeline import DetectionPipeline, bench, format_bench

IMAGE_EXTS = (".jpg", ".jpeg", ".png")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cashsight", description="Multi-currency detection runtime")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the streaming service")
    p_serve.add_argument("--config", help="JSON config file")
    p_serve.add_argument("--port", type=int, help="override server.port")

    p_detect = sub.add_parser("detect", help="detect currency in one image")
    p_detect.add_argument("--image", required=True)
    p_detect.add_argument("--features", help="DNM1 feature file to use instead of the mock backbone")
    p_detect.add_argument("--config", help="JSON config file")
    p_detect.add_argument("--out", required=True, help="output JSON path")

    p_eval = sub.add_parser("eval", help="score predictions against YOLO-format ground truth")
    p_eval.add_argument("--preds", required=True, help="JSONL predictions")
    p_eval.add_argument("--gt", required=True, help="ground-truth dir (labels/*.txt, optional images/)")
    p_eval.add_argument("--out", required=True, help="report JSON path")
    p_eval.add_argument("--curves", help="directory for per-class PR curve CSVs (default: <out>_curves)")

    p_prep = sub.add_parser("prep", help="letterbox, augment and split a raw dataset")
    p_prep.add_argument("--in", dest="in_dir", required=True)
    p_prep.add_argument("--out", dest="out_dir", required=True)
    p_prep.add_argument("--augment", action="store_true", help="apply the 12-way rotation grid")
    p_prep.add_argument("--split", default="0.7,0.15,0.15")
    p_prep.add_argument("--seed", type=int, default=0)

    p_bench = sub.add_parser("bench", help="time the frame pipeline")
    p_bench.add_argument("--frames", type=int, default=20)
    p_bench.add_argument("--config", help="JSON config file")

    p_anchors = sub.add_parser("anchors", help="fit anchors to a label set with k-means")
    p_anchors.add_argument("--labels", required=True, help="directory of YOLO label files")
    p_anchors.add_argument("--size", type=int, default=640)
    p_anchors.add_argument("--seed", type=int, default=0)

    return parser


def _load_config_arg(path: str | None) -> Config:
    if path is None:
        return Config()
    p = Path(path)
    if not p.is_file():
        raise _UsageError(f"config file not found: {path}")
    try:
        return load_config(p)
    except (ValueError, json.JSONDecodeError) as exc:
        raise _UsageError(f"bad config {path}: {exc}") from exc


class _UsageError(Exception):
    pass


def _cmd_serve(args) -> int:
    from .service import serve

    config = _load_config_arg(args.config)
    if args.port is not None:
        config.server.port = args.port
    serve(config)
    return 0


def _cmd_detect(args) -> int:
    config = _load_config_arg(args.config)
    provider = None
    if args.features:
        from .features import FileFeatureProvider

        provider = FileFeatureProvider(args.features)
    pipeline = DetectionPipeline(config, provider=provider)
    img = imageio.read_bgr(args.image)
    result = pipeline.process(img)
    payload = {
        "image": str(args.image),
        "detections": [
            {
                "cls": datakit.class_lookup(d.class_id).name,
                "conf": round(d.confidence, 4),
                "xyxy": [round(v, 2) for v in d.box],
            }
            for d in result.detections
        ],
        "timing_ms": result.timing_ms,
    }
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _gt_label_files(gt_dir: Path) -> list[Path]:
    labels = gt_dir / "labels"
    root = labels if labels.is_dir() else gt_dir
    files = sorted(p for p in root.rglob("*.txt") if p.name != "classes.txt")
    if not files:
        raise _UsageError(f"no label files under {gt_dir}")
    return files


def _image_dims(gt_dir: Path, stem: str) -> tuple[int, int]:
    images = gt_dir / "images"
    roots = [images, gt_dir] if images.is_dir() else [gt_dir]
    for root in roots:
        for ext in IMAGE_EXTS:
            for p in root.rglob(stem + ext):
                with Image.open(p) as im:
                    return im.size
    return 640, 640  # default canvas when no image is bundled


def _cmd_eval(args) -> int:
    gt_dir = Path(args.gt)
    gts_by_image: dict[str, list] = {}
    dims: dict[str, tuple[int, int]] = {}
    for label_file in _gt_label_files(gt_dir):
        stem = label_file.stem
        w, h = _image_dims(gt_dir, stem)
        dims[stem] = (w, h)
        anns = datakit.read_yolo_txt(label_file)
        gts_by_image[stem] = [(a.to_pixel_xyxy(w, h), a.class_id) for a in anns]

    preds_by_image: dict[str, list[Detection]] = {stem: [] for stem in gts_by_image}
    with open(args.preds) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                cls = rec["class"]
                cid = datakit.class_lookup(cls).class_id
                det = Detection(tuple(float(v) for v in rec["box"]), cid, float(rec["confidence"]))
                preds_by_image.setdefault(str(rec["image"]), []).append(det)
            except (KeyError, ValueError, TypeError) as exc:
                raise _UsageError(f"{args.preds}: line {lineno}: {exc}") from exc

    report = metrics.evaluation_report(preds_by_image, gts_by_image, class_names=datakit.CLASS_NAMES)
    out_path = Path(args.out)
    out_path.write_text(json.dumps(report, indent=2) + "\n")

    curves_dir = Path(args.curves) if args.curves else out_path.with_name(out_path.stem + "_curves")
    curves_dir.mkdir(parents=True, exist_ok=True)
    scored, gt_counts = metrics.per_class_scored(preds_by_image, gts_by_image, 0.5, metrics.NUM_CLASSES)
    for c, name in enumerate(datakit.CLASS_NAMES):
        curve = metrics.average_precision(scored[c], gt_counts[c])
        (curves_dir / f"pr_{name}.csv").write_text(metrics.pr_curve_csv(curve, name))
    print(f"eval: f1={report['f1']:.4f} accuracy={report['accuracy']:.4f} mAP50(B)={report['map50']:.4f}")
    return 0


def _find_label(img_path: Path, in_dir: Path) -> Path | None:
    sidecar = img_path.with_suffix(".txt")
    if sidecar.is_file():
        return sidecar
    nested = in_dir / "labels" / (img_path.stem + ".txt")
    return nested if nested.is_file() else None


def _letterbox_annotations(anns, tf: imgproc.LetterboxTransform, target: int = 640):
    out = []
    for a in anns:
        x1, y1, x2, y2 = a.to_pixel_xyxy(tf.original_width, tf.original_height)
        nx1, ny1, nx2, ny2 = tf.forward_box((x1, y1, x2, y2))
        out.append(
            datakit.Annotation(
                a.class_id,
                (nx1 + nx2) / 2.0 / target,
                (ny1 + ny2) / 2.0 / target,
                (nx2 - nx1) / target,
                (ny2 - ny1) / target,
            )
        )
    return out


def _cmd_prep(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    if not in_dir.is_dir():
        raise _UsageError(f"input directory not found: {in_dir}")
    try:
        fractions = [float(v) for v in args.split.split(",")]
        spec = datakit.SplitSpec(*fractions, seed=args.seed)
    except (ValueError, TypeError) as exc:
        raise _UsageError(f"bad --split {args.split!r}: {exc}") from exc

    images = sorted(p for p in in_dir.rglob("*") if p.suffix.lower() in IMAGE_EXTS)
    if not images:
        raise _UsageError(f"no images under {in_dir}")

    prepared = []  # (name, image, annotations)
    for img_path in images:
        img = imageio.read_bgr(img_path)
        label = _find_label(img_path, in_dir)
        anns = datakit.read_yolo_txt(label) if label else []
        canvas, tf = imgproc.letterbox_square(img, target=640, pad_value=255)
        anns = _letterbox_annotations(anns, tf)
        if args.augment:
            for idx, (aug_img, aug_anns) in enumerate(datakit.augment_twelve(canvas, anns)):
                first, second = datakit.AUGMENT_ANGLES[idx]
                prepared.append((f"{img_path.stem}_r{first:03d}_{second:03d}", aug_img, aug_anns))
        else:
            prepared.append((img_path.stem, canvas, anns))

    train, val, test = datakit.split_dataset(prepared, spec)
    for split_name, split_items in (("train", train), ("val", val), ("test", test)):
        (out_dir / "images" / split_name).mkdir(parents=True, exist_ok=True)
        (out_dir / "labels" / split_name).mkdir(parents=True, exist_ok=True)
        for name, img, anns in split_items:
            imageio.write_bgr(out_dir / "images" / split_name / f"{name}.png", img)
            datakit.write_yolo_txt(anns, out_dir / "labels" / split_name / f"{name}.txt")
    (out_dir / "classes.txt").write_text("\n".join(datakit.CLASS_NAMES) + "\n")
    print(f"prep: wrote {len(prepared)} images ({len(train)}/{len(val)}/{len(test)} train/val/test)")
    return 0


def _cmd_bench(args) -> int:
    config = _load_config_arg(args.config)
    pipeline = DetectionPipeline(config)
    stats = bench(pipeline, frames=args.frames)
    print(format_bench(stats))
    return 0


def _cmd_anchors(args) -> int:
    labels_dir = Path(args.labels)
    if not labels_dir.is_dir():
        raise _UsageError(f"labels directory not found: {labels_dir}")
    whs = []
    for label_file in sorted(labels_dir.rglob("*.txt")):
        if label_file.name == "classes.txt":
            continue
        for a in datakit.read_yolo_txt(label_file):
            whs.append((a.w * args.size, a.h * args.size))
    anchors = kmeans_anchors(whs, seed=args.seed)
    print(json.dumps({"head": {"anchors": {k: [list(v) for v in vs] for k, vs in anchors.items()}}}, indent=2))
    return 0


_COMMANDS = {
    "serve": _cmd_serve,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "prep": _cmd_prep,
    "bench": _cmd_bench,
    "anchors": _cmd_anchors,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
