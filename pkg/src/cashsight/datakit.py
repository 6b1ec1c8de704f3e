"""Dataset tooling: the 30-class currency table, YOLO-format label I/O,
rotation augmentation with box transforms, and deterministic splits.

Rotation convention: positive angles apply the standard rotation matrix in
(x, y) pixel coordinates about the image center.  Right-angle rotations are
exact pixel permutations; 30/60 degrees resample bilinearly with exposed
corners filled white (matching the white letterbox padding).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ClassEntry",
    "CLASS_TABLE",
    "CLASS_NAMES",
    "class_lookup",
    "Annotation",
    "read_yolo_txt",
    "write_yolo_txt",
    "SplitSpec",
    "split_dataset",
    "rotate_image_and_boxes",
    "augment_twelve",
    "AUGMENT_ANGLES",
]

GROUP_UNIT = {"BDT": "taka", "USD": "dollar", "EUR": "euro", "EURCENT": "eurocent"}


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    group: str  # USD | EUR | EURCENT | BDT
    value: int  # denomination in the group's unit

    @property
    def spoken(self) -> str:
        return f"{self.value} {GROUP_UNIT[self.group]}"


_TABLE_ROWS = [
    ("1000taka", "BDT", 1000),
    ("100dollar", "USD", 100),
    ("100euro", "EUR", 100),
    ("100taka", "BDT", 100),
    ("10dollar", "USD", 10),
    ("10euro", "EUR", 10),
    ("10eurocent", "EURCENT", 10),
    ("10taka", "BDT", 10),
    ("1dollar", "USD", 1),
    ("1euro", "EUR", 1),
    ("1eurocent", "EURCENT", 1),
    ("1taka", "BDT", 1),
    ("200taka", "BDT", 200),
    ("20dollar", "USD", 20),
    ("20euro", "EUR", 20),
    ("20eurocent", "EURCENT", 20),
    ("20taka", "BDT", 20),
    ("2dollar", "USD", 2),
    ("2euro", "EUR", 2),
    ("2eurocent", "EURCENT", 2),
    ("2taka", "BDT", 2),
    ("500taka", "BDT", 500),
    ("50dollar", "USD", 50),
    ("50euro", "EUR", 50),
    ("50eurocent", "EURCENT", 50),
    ("50taka", "BDT", 50),
    ("5dollar", "USD", 5),
    ("5euro", "EUR", 5),
    ("5eurocent", "EURCENT", 5),
    ("5taka", "BDT", 5),
]

CLASS_TABLE = tuple(ClassEntry(i, name, group, value) for i, (name, group, value) in enumerate(_TABLE_ROWS))
CLASS_NAMES = tuple(e.name for e in CLASS_TABLE)
NUM_CLASSES = len(CLASS_TABLE)
_BY_NAME = {e.name: e for e in CLASS_TABLE}


def class_lookup(key: int | str) -> ClassEntry:
    """Resolve a class id or class name to its table entry."""
    if isinstance(key, str):
        if key not in _BY_NAME:
            raise KeyError(f"unknown class name {key!r}")
        return _BY_NAME[key]
    if not 0 <= key < NUM_CLASSES:
        raise KeyError(f"class id {key} out of range 0..{NUM_CLASSES - 1}")
    return CLASS_TABLE[key]


@dataclass(frozen=True)
class Annotation:
    """One YOLO-format label: normalized center/size in [0, 1]."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def corners(self):
        """Four (x, y) corners in normalized coordinates."""
        hw, hh = self.w / 2.0, self.h / 2.0
        return [
            (self.cx - hw, self.cy - hh),
            (self.cx + hw, self.cy - hh),
            (self.cx + hw, self.cy + hh),
            (self.cx - hw, self.cy + hh),
        ]

    def to_pixel_xyxy(self, width: int, height: int) -> tuple[float, float, float, float]:
        return (
            (self.cx - self.w / 2.0) * width,
            (self.cy - self.h / 2.0) * height,
            (self.cx + self.w / 2.0) * width,
            (self.cy + self.h / 2.0) * height,
        )


class LabelParseError(ValueError):
    """Malformed or out-of-range YOLO label line."""


def read_yolo_txt(path) -> list[Annotation]:
    """Parse `class cx cy w h` lines; empty file means no objects."""
    anns = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 5:
                raise LabelParseError(f"{path}: line {lineno}: expected 5 fields, got {len(parts)}")
            try:
                cid = int(parts[0])
                coords = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise LabelParseError(f"{path}: line {lineno}: {exc}") from exc
            if not 0 <= cid < NUM_CLASSES:
                raise LabelParseError(f"{path}: line {lineno}: class_id {cid} out of range 0..{NUM_CLASSES - 1}")
            for field_name, v in zip(("cx", "cy", "w", "h"), coords):
                if not 0.0 <= v <= 1.0:
                    raise LabelParseError(f"{path}: line {lineno}: {field_name}={v} outside [0, 1]")
            anns.append(Annotation(cid, *coords))
    return anns


def write_yolo_txt(annotations, path) -> None:
    with open(path, "w") as fh:
        for a in annotations:
            fh.write(f"{a.class_id} {a.cx:.6f} {a.cy:.6f} {a.w:.6f} {a.h:.6f}\n")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self):
        total = self.train + self.val + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")


def split_dataset(items, spec: SplitSpec = SplitSpec()):
    """Deterministic shuffle + floor split; remainder goes to test."""
    items = list(items)
    if not items:
        raise ValueError("cannot split an empty dataset")
    order = list(range(len(items)))
    random.Random(spec.seed).shuffle(order)
    shuffled = [items[i] for i in order]
    n = len(items)
    n_train = int(spec.train * n)
    n_val = int(spec.val * n)
    return shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]


def _rotate_points(points, angle_degrees: float, cx: float = 0.5, cy: float = 0.5):
    th = math.radians(angle_degrees)
    c, s = math.cos(th), math.sin(th)
    return [(cx + c * (x - cx) - s * (y - cy), cy + s * (x - cx) + c * (y - cy)) for x, y in points]


def _rotate_boxes(annotations, angle_degrees: float, min_area_keep: float = 0.20):
    if angle_degrees % 360.0 == 0.0:
        return list(annotations)
    out = []
    for a in annotations:
        pts = _rotate_points(a.corners(), angle_degrees)
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x1, x2 = max(min(xs), 0.0), min(max(xs), 1.0)
        y1, y2 = max(min(ys), 0.0), min(max(ys), 1.0)
        if x2 <= x1 or y2 <= y1:
            continue
        if (x2 - x1) * (y2 - y1) < min_area_keep * a.w * a.h:
            continue
        out.append(Annotation(a.class_id, (x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1))
    return out


def _rotate_pixels(img: np.ndarray, angle_degrees: float, fill: int = 255) -> np.ndarray:
    angle = angle_degrees % 360.0
    if angle == 0.0:
        return img.copy()
    if angle in (90.0, 180.0, 270.0):
        # math-positive rotation in (x, y) image coords = clockwise rot90 steps
        return np.ascontiguousarray(np.rot90(img, k=-int(angle // 90), axes=(0, 1)))

    h, w = img.shape[:2]
    ch, cw = h / 2.0, w / 2.0
    th = math.radians(angle)
    c, s = math.cos(th), math.sin(th)
    # inverse map: destination pixel center -> source position
    dx = np.arange(w, dtype=np.float64) + 0.5 - cw
    dy = np.arange(h, dtype=np.float64) + 0.5 - ch
    gx = c * dx[None, :] + s * dy[:, None] + cw
    gy = -s * dx[None, :] + c * dy[:, None] + ch
    qx = gx - 0.5
    qy = gy - 0.5

    chans = img if img.ndim == 3 else img[:, :, None]
    # pad one white pixel so boundary blends mix with the fill color
    padded = np.pad(chans, ((1, 1), (1, 1), (0, 0)), constant_values=fill).astype(np.float64)
    x0 = np.floor(qx).astype(np.int64)
    y0 = np.floor(qy).astype(np.int64)
    fx = (qx - x0)[:, :, None]
    fy = (qy - y0)[:, :, None]
    x0c = np.clip(x0 + 1, 0, w + 1)
    y0c = np.clip(y0 + 1, 0, h + 1)
    x1c = np.clip(x0 + 2, 0, w + 1)
    y1c = np.clip(y0 + 2, 0, h + 1)
    va = padded[y0c, x0c]
    vb = padded[y0c, x1c]
    vc = padded[y1c, x0c]
    vd = padded[y1c, x1c]
    out = (va * (1 - fx) + vb * fx) * (1 - fy) + (vc * (1 - fx) + vd * fx) * fy
    outside = (qx < -1.0) | (qx > w) | (qy < -1.0) | (qy > h)
    out[outside] = fill
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out[:, :, 0] if img.ndim == 2 else out


def rotate_image_and_boxes(img: np.ndarray, annotations, angle_degrees: int):
    """Rotate a square image + labels; boxes become the clipped AABB of
    their rotated corners, dropped below 20% area survival."""
    if img.shape[0] != img.shape[1]:
        raise ValueError(f"rotation expects a square (padded) image, got {img.shape[1]}x{img.shape[0]}")
    if angle_degrees not in (30, 60, 90, 180, 270, 360):
        raise ValueError(f"unsupported rotation angle {angle_degrees}")
    return _rotate_pixels(img, float(angle_degrees)), _rotate_boxes(annotations, float(angle_degrees))


AUGMENT_ANGLES = tuple((first, second) for first in (0, 30, 60) for second in (90, 180, 270, 360))


def augment_twelve(img: np.ndarray, annotations):
    """The 12-fold rotation grid: {0,30,60} then {90,180,270,360} degrees.

    The (0, 360) cell reproduces the input; order matches AUGMENT_ANGLES.
    Intended as a single application per source image (the prep CLI never
    feeds augmented outputs back in).
    """
    results = []
    for first in (0, 30, 60):
        if first == 0:
            base_img, base_anns = img.copy(), list(annotations)
        else:
            base_img, base_anns = rotate_image_and_boxes(img, annotations, first)
        for second in (90, 180, 270, 360):
            results.append(rotate_image_and_boxes(base_img, base_anns, second))
    return results
