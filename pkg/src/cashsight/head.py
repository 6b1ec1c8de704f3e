"""SE-augmented detection head over P3/P4/P5 feature maps, plus decoding,
NMS, the composite training loss, and desk-scale SGD training.

Per scale the head runs conv3x3 -> batchnorm -> ReLU -> SE -> conv1x1 and
emits 105 channels: 3 anchors x (4 box offsets + objectness + 30 classes).
Within each anchor block the channel order is (tx, ty, tw, th, obj, 30
class logits).

Decode parameterization (fixed; the encode helper below is its inverse):

    objectness   = sigmoid(t_obj)
    class probs  = sigmoid(t_cls)
    center       = (cell + sigmoid(t_xy)) * stride
    width/height = anchor * exp(min(t_wh, 4))
    confidence   = objectness * max class prob

Boxes are (x1, y1, x2, y2) pixels on the 640x640 canvas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import container
from .tensorops import (
    BatchNorm2d,
    Conv2d,
    Linear,
    ShapeError,
    adaptive_avg_pool_1x1,
    adaptive_avg_pool_1x1_backward,
    relu,
    relu_backward,
    sgd_step,
    sigmoid,
    sigmoid_backward,
)

NUM_CLASSES = 30
NUM_ANCHORS = 3
ANCHOR_CHANNELS = NUM_CLASSES + 5  # tx, ty, tw, th, obj + classes
OUT_CHANNELS = NUM_ANCHORS * ANCHOR_CHANNELS  # 105
SCALES = ("P3", "P4", "P5")
STRIDES = {"P3": 8, "P4": 16, "P5": 32}
GRID_SIZES = {"P3": 80, "P4": 40, "P5": 20}
DEFAULT_IN_CHANNELS = {"P3": 64, "P4": 128, "P5": 256}
INPUT_SIZE = 640
WH_LOGIT_CAP = 4.0
_LOSS_WH_LIMIT = 10.0  # exp() overflow guard inside the loss
LOSS_WEIGHTS = {"box": 7.5, "obj": 1.0, "cls": 0.5}


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]  # x1, y1, x2, y2 pixels
    class_id: int
    confidence: float


class SEBlock:
    """Squeeze-and-excitation channel gate: pool -> fc -> ReLU -> fc -> sigmoid."""

    def __init__(self, channels: int, reduction: int = 16, rng: np.random.Generator | None = None, dtype=np.float32):
        self.channels = channels
        self.reduction = reduction
        hidden = max(channels // reduction, 1)
        rng = rng or np.random.default_rng(0)
        self.fc1 = Linear(channels, hidden, rng=rng, dtype=dtype)
        self.fc2 = Linear(hidden, channels, rng=rng, dtype=dtype)

    def params(self):
        return self.fc1.params() + self.fc2.params()

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"SE block expects [B,{self.channels},H,W], got {x.shape}")
        b, c, h, w = x.shape
        squeezed = adaptive_avg_pool_1x1(x).reshape(b, c)
        c1: dict = {}
        c2: dict = {}
        pre = self.fc1.forward(squeezed, cache=c1)
        act = relu(pre)
        gate = sigmoid(self.fc2.forward(act, cache=c2))
        out = x * gate[:, :, None, None]
        if cache is not None:
            cache.update(x=x, pre=pre, gate=gate, fc1=c1, fc2=c2, hw=(h, w))
        return out

    def backward(self, dy: np.ndarray, cache: dict) -> np.ndarray:
        x, gate, pre = cache["x"], cache["gate"], cache["pre"]
        h, w = cache["hw"]
        dgate = (dy * x).sum(axis=(2, 3))
        dfc2 = sigmoid_backward(dgate, gate)
        dact = self.fc2.backward(dfc2, cache["fc2"])
        dpre = relu_backward(dact, pre)
        dsq = self.fc1.backward(dpre, cache["fc1"])
        dx_pool = adaptive_avg_pool_1x1_backward(dsq[:, :, None, None], h, w)
        return dy * gate[:, :, None, None] + dx_pool


class HeadScale:
    """One pyramid level: conv3x3 -> BN -> ReLU -> SE -> conv1x1 (105 ch)."""

    def __init__(self, in_ch: int, rng: np.random.Generator | None = None, dtype=np.float32, se_reduction: int = 16):
        rng = rng or np.random.default_rng(0)
        self.in_ch = in_ch
        self.conv3 = Conv2d(in_ch, 32, kernel_size=3, padding=1, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(32, dtype=dtype)
        self.se = SEBlock(32, reduction=se_reduction, rng=rng, dtype=dtype)
        self.conv1 = Conv2d(32, OUT_CHANNELS, kernel_size=1, padding=0, rng=rng, dtype=dtype)
        # start anchors as background so an untrained head stays quiet, and
        # zero the box-offset rows so every cell begins at its anchor prior
        obj_rows = np.arange(NUM_ANCHORS) * ANCHOR_CHANNELS + 4
        self.conv1.bias.value[obj_rows] = -4.0
        box_rows = (np.arange(NUM_ANCHORS) * ANCHOR_CHANNELS)[:, None] + np.arange(4)[None, :]
        self.conv1.weight.value[box_rows.ravel()] = 0.0

    def params(self):
        return self.conv3.params() + self.bn.params() + self.se.params() + self.conv1.params()

    def forward(self, x: np.ndarray, training: bool = False, cache: dict | None = None) -> np.ndarray:
        caches = {"conv3": {}, "bn": {}, "se": {}, "conv1": {}} if cache is not None else None

        def sub(name):
            return caches[name] if caches is not None else None

        t = self.conv3.forward(x, cache=sub("conv3"))
        t = self.bn.forward(t, training=training, cache=sub("bn"))
        pre = t
        t = relu(t)
        t = self.se.forward(t, cache=sub("se"))
        out = self.conv1.forward(t, cache=sub("conv1"))
        if cache is not None:
            cache.update(caches)
            cache["bn_pre"] = pre
        return out

    def backward(self, dy: np.ndarray, cache: dict, need_dx: bool = True) -> np.ndarray | None:
        d = self.conv1.backward(dy, cache["conv1"])
        d = self.se.backward(d, cache["se"])
        d = relu_backward(d, cache["bn_pre"])
        d = self.bn.backward(d, cache["bn"])
        return self.conv3.backward(d, cache["conv3"], need_dx=need_dx)


class DetectionHead:
    """The three-scale head with named-parameter (de)serialization."""

    def __init__(self, in_channels: dict[str, int] | None = None, seed: int = 0, dtype=np.float32):
        self.in_channels = dict(in_channels or DEFAULT_IN_CHANNELS)
        rng = np.random.default_rng(seed)
        self.scales = {s: HeadScale(self.in_channels[s], rng=rng, dtype=dtype) for s in SCALES}

    def params(self):
        out = []
        for s in SCALES:
            out.extend(self.scales[s].params())
        return out

    def forward(self, features: dict[str, np.ndarray], training: bool = False, cache: dict | None = None) -> dict[str, np.ndarray]:
        for s in SCALES:
            if s not in features:
                raise ValueError(f"missing scale {s} in features")
        out = {}
        for s in SCALES:
            sub = {} if cache is not None else None
            out[s] = self.scales[s].forward(features[s], training=training, cache=sub)
            if cache is not None:
                cache[s] = sub
        return out

    def backward(self, d_raw: dict[str, np.ndarray], cache: dict, need_dx: bool = True) -> dict[str, np.ndarray | None]:
        return {s: self.scales[s].backward(d_raw[s], cache[s], need_dx=need_dx) for s in SCALES}

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for s in SCALES:
            sc = self.scales[s]
            out[f"{s}.conv3.weight"] = sc.conv3.weight.value
            out[f"{s}.conv3.bias"] = sc.conv3.bias.value
            out[f"{s}.bn.gamma"] = sc.bn.gamma.value
            out[f"{s}.bn.beta"] = sc.bn.beta.value
            out[f"{s}.bn.running_mean"] = sc.bn.running_mean
            out[f"{s}.bn.running_var"] = sc.bn.running_var
            out[f"{s}.se.fc1.weight"] = sc.se.fc1.weight.value
            out[f"{s}.se.fc1.bias"] = sc.se.fc1.bias.value
            out[f"{s}.se.fc2.weight"] = sc.se.fc2.weight.value
            out[f"{s}.se.fc2.bias"] = sc.se.fc2.bias.value
            out[f"{s}.conv1.weight"] = sc.conv1.weight.value
            out[f"{s}.conv1.bias"] = sc.conv1.bias.value
        return out

    def save(self, path) -> None:
        container.save_container(path, self.named_arrays())

    def load(self, path) -> None:
        entries = container.load_container(path)
        for name, target in self.named_arrays().items():
            if name not in entries:
                raise container.ContainerFormatError(f"missing entry {name!r}")
            if entries[name].shape != target.shape:
                raise container.ContainerFormatError(
                    f"entry {name!r}: dims {entries[name].shape} do not match {target.shape}"
                )
            target[...] = entries[name].astype(target.dtype)


def iou(box_a, box_b) -> float:
    """Intersection over union of two xyxy boxes; 0 for degenerate boxes."""
    ax1, ay1, ax2, ay2 = box_a
    bx1, by1, bx2, by2 = box_b
    area_a = max(0.0, ax2 - ax1) * max(0.0, ay2 - ay1)
    area_b = max(0.0, bx2 - bx1) * max(0.0, by2 - by1)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def nms(dets: list[Detection], iou_threshold: float = 0.45) -> list[Detection]:
    """Greedy class-wise suppression with a deterministic tie-break."""
    ordered = sorted(dets, key=lambda d: (-d.confidence, d.box[0], d.box[1]))
    kept: list[Detection] = []
    for d in ordered:
        if all(k.class_id != d.class_id or iou(k.box, d.box) < iou_threshold for k in kept):
            kept.append(d)
    return kept


def _scale_grids(raw: np.ndarray, scale: str):
    if raw.ndim == 4:
        if raw.shape[0] != 1:
            raise ShapeError(f"decode expects a single image, got batch {raw.shape[0]}")
        raw = raw[0]
    if raw.ndim != 3 or raw.shape[0] != OUT_CHANNELS:
        raise ShapeError(f"decode expects [{OUT_CHANNELS},H,W] for {scale}, got {raw.shape}")
    return raw


def decode(
    raw_by_scale: dict[str, np.ndarray],
    anchors: dict[str, list[tuple[float, float]]],
    conf_threshold: float = 0.25,
    input_size: int = INPUT_SIZE,
) -> list[Detection]:
    """Turn raw head outputs into thresholded pixel-space detections."""
    dets: list[Detection] = []
    for scale in SCALES:
        if scale not in raw_by_scale:
            continue
        raw = _scale_grids(raw_by_scale[scale], scale)
        stride = STRIDES[scale]
        h, w = raw.shape[1:]
        grid = raw.reshape(NUM_ANCHORS, ANCHOR_CHANNELS, h, w)
        obj = sigmoid(grid[:, 4])
        # confidence = obj * max class prob <= obj, so obj below threshold
        # can never survive; only decode the survivors
        cand = np.nonzero(obj >= conf_threshold) if conf_threshold > 0 else np.nonzero(obj >= -1.0)
        for a, cy, cx in zip(*cand):
            vec = grid[a, :, cy, cx]
            cls_prob = sigmoid(vec[5:])
            cls_id = int(np.argmax(cls_prob))
            conf = float(obj[a, cy, cx] * cls_prob[cls_id])
            if conf < conf_threshold:
                continue
            ax, ay = anchors[scale][a]
            bx = (cx + float(sigmoid(vec[0:1])[0])) * stride
            by = (cy + float(sigmoid(vec[1:2])[0])) * stride
            bw = ax * math.exp(min(float(vec[2]), WH_LOGIT_CAP))
            bh = ay * math.exp(min(float(vec[3]), WH_LOGIT_CAP))
            x1 = min(max(bx - bw / 2.0, 0.0), float(input_size))
            y1 = min(max(by - bh / 2.0, 0.0), float(input_size))
            x2 = min(max(bx + bw / 2.0, 0.0), float(input_size))
            y2 = min(max(by + bh / 2.0, 0.0), float(input_size))
            dets.append(Detection((x1, y1, x2, y2), cls_id, conf))
    return dets


def shape_iou(wh_a: tuple[float, float], wh_b: tuple[float, float]) -> float:
    """IoU of two co-centered width/height pairs (anchor matching metric)."""
    inter = min(wh_a[0], wh_b[0]) * min(wh_a[1], wh_b[1])
    union = wh_a[0] * wh_a[1] + wh_b[0] * wh_b[1] - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class AssignedTarget:
    """A ground-truth box mapped to its (scale, cell, anchor) slot."""

    scale: str
    anchor: int
    cell_x: int
    cell_y: int
    box: tuple[float, float, float, float]
    class_id: int


def assign_targets(gt_boxes, anchors: dict[str, list[tuple[float, float]]]) -> list[AssignedTarget]:
    """One-to-one assignment: best shape-IoU anchor, center cell.

    ``gt_boxes`` is a list of ((x1, y1, x2, y2), class_id) in 640-space.
    Ties and slot collisions resolve to the first in (scale, anchor) order.
    """
    out: list[AssignedTarget] = []
    taken: set[tuple[str, int, int, int]] = set()
    for box, class_id in gt_boxes:
        x1, y1, x2, y2 = box
        bw, bh = x2 - x1, y2 - y1
        cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
        best_scale, best_anchor, best_iou = SCALES[0], 0, -1.0
        for scale in SCALES:
            for a, awh in enumerate(anchors[scale]):
                s_iou = shape_iou((bw, bh), awh)
                if s_iou > best_iou:
                    best_scale, best_anchor, best_iou = scale, a, s_iou
        grid = GRID_SIZES[best_scale]
        stride = STRIDES[best_scale]
        cell_x = min(max(int(cx // stride), 0), grid - 1)
        cell_y = min(max(int(cy // stride), 0), grid - 1)
        slot = (best_scale, best_anchor, cell_x, cell_y)
        if slot in taken:
            continue  # desk-scale fixtures place at most one GT per slot
        taken.add(slot)
        out.append(AssignedTarget(best_scale, best_anchor, cell_x, cell_y, (x1, y1, x2, y2), class_id))
    return out


def encode_targets(
    targets: list[AssignedTarget],
    anchors: dict[str, list[tuple[float, float]]],
    grid_sizes: dict[str, int] | None = None,
    hot_logit: float = 12.0,
    cold_logit: float = -20.0,
) -> dict[str, np.ndarray]:
    """Inverse of :func:`decode`: raw tensors whose decode recovers the boxes.

    Target centers must not sit exactly on cell boundaries (the x/y offset
    logit would be infinite) and sizes must stay within exp(4) of the anchor.
    """
    grid_sizes = grid_sizes or GRID_SIZES
    raw = {s: np.full((OUT_CHANNELS, grid_sizes[s], grid_sizes[s]), 0.0, dtype=np.float64) for s in SCALES}
    for s in SCALES:
        grid = raw[s].reshape(NUM_ANCHORS, ANCHOR_CHANNELS, grid_sizes[s], grid_sizes[s])
        grid[:, 4] = cold_logit
        grid[:, 5:] = cold_logit
    for t in targets:
        stride = STRIDES[t.scale]
        x1, y1, x2, y2 = t.box
        cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
        bw, bh = x2 - x1, y2 - y1
        fx = cx / stride - t.cell_x
        fy = cy / stride - t.cell_y
        if not (0.0 < fx < 1.0 and 0.0 < fy < 1.0):
            raise ValueError(f"target center {cx},{cy} not interior to cell ({t.cell_x},{t.cell_y}) at {t.scale}")
        ax, ay = anchors[t.scale][t.anchor]
        tw = math.log(bw / ax)
        th = math.log(bh / ay)
        if tw > WH_LOGIT_CAP or th > WH_LOGIT_CAP:
            raise ValueError(f"target size {bw}x{bh} beyond exp({WH_LOGIT_CAP}) of anchor {ax}x{ay}")
        grid = raw[t.scale].reshape(NUM_ANCHORS, ANCHOR_CHANNELS, grid_sizes[t.scale], grid_sizes[t.scale])
        vec = grid[t.anchor, :, t.cell_y, t.cell_x]
        vec[0] = math.log(fx / (1.0 - fx))
        vec[1] = math.log(fy / (1.0 - fy))
        vec[2] = tw
        vec[3] = th
        vec[4] = hot_logit
        vec[5 + t.class_id] = hot_logit
    return raw


def _bce_with_logits(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))


def _iou_with_grad(pred, gt):
    """IoU of two xyxy boxes plus d(iou)/d(pred), zero when disjoint."""
    px1, py1, px2, py2 = pred
    gx1, gy1, gx2, gy2 = gt
    pw, ph = px2 - px1, py2 - py1
    iw = min(px2, gx2) - max(px1, gx1)
    ih = min(py2, gy2) - max(py1, gy1)
    if iw <= 0.0 or ih <= 0.0 or pw <= 0.0 or ph <= 0.0:
        return 0.0, np.zeros(4)
    inter = iw * ih
    area_p = pw * ph
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = area_p + area_g - inter
    val = inter / union

    d_inter = np.array(
        [
            -ih if px1 > gx1 else 0.0,
            -iw if py1 > gy1 else 0.0,
            ih if px2 < gx2 else 0.0,
            iw if py2 < gy2 else 0.0,
        ]
    )
    d_area_p = np.array([-ph, -pw, ph, pw])
    d_union = d_area_p - d_inter
    return val, (d_inter * union - inter * d_union) / (union * union)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    box: float
    obj: float
    cls: float


def head_loss(
    raw_by_scale: dict[str, np.ndarray],
    targets_per_image: list[list[AssignedTarget]],
    anchors: dict[str, list[tuple[float, float]]],
    weights: dict[str, float] | None = None,
) -> tuple[LossBreakdown, dict[str, np.ndarray]]:
    """Composite loss and its gradient w.r.t. the raw head outputs.

    box: mean over positives of (1 - IoU of decoded box vs target box).
    obj: binary cross-entropy on every anchor slot, balanced as the mean of
         the negative-slot average and the positive-slot average (an
         unbalanced mean over ~25k slots would starve the positives).
    cls: per positive, BCE summed over the 30 class logits, averaged over
         positives.
    total = 7.5*box + 1.0*obj + 0.5*cls by default.
    """
    w = dict(LOSS_WEIGHTS)
    if weights:
        w.update(weights)
    batch = raw_by_scale[SCALES[0]].shape[0]
    if len(targets_per_image) != batch:
        raise ValueError(f"targets for {len(targets_per_image)} images but batch is {batch}")
    for s in SCALES:
        if not np.all(np.isfinite(raw_by_scale[s])):
            raise FloatingPointError(f"non-finite head output at scale {s}")

    grads = {s: np.zeros_like(raw_by_scale[s]) for s in SCALES}
    pos_slots: dict[str, list] = {s: [] for s in SCALES}
    positives = []
    for b, targets in enumerate(targets_per_image):
        for t in targets:
            positives.append((b, t))
            pos_slots[t.scale].append((b, t.anchor, t.cell_y, t.cell_x))
    n_pos = len(positives)

    def anchor_view(arr: np.ndarray) -> np.ndarray:
        b, ch, h, w_ = arr.shape
        if ch != OUT_CHANNELS:
            raise ShapeError(f"head_loss expects {OUT_CHANNELS} channels, got {ch}")
        return arr.reshape(b, NUM_ANCHORS, ANCHOR_CHANNELS, h, w_)

    # objectness over all slots
    neg_grids = {}
    for s in SCALES:
        g = anchor_view(raw_by_scale[s])
        obj_logits = g[:, :, 4]
        tgt = np.zeros_like(obj_logits)
        for b, a, cy, cx in pos_slots[s]:
            tgt[b, a, cy, cx] = 1.0
        neg_grids[s] = (obj_logits, tgt)
    n_neg = sum(np.count_nonzero(t == 0.0) for _, t in neg_grids.values())

    obj_loss = 0.0
    pos_bce_sum = 0.0
    neg_bce_sum = 0.0
    for s in SCALES:
        logits, tgt = neg_grids[s]
        bce = _bce_with_logits(logits, tgt)
        pos_bce_sum += float(bce[tgt == 1.0].sum())
        neg_bce_sum += float(bce[tgt == 0.0].sum())
    if n_pos and n_neg:
        obj_loss = 0.5 * (neg_bce_sum / n_neg + pos_bce_sum / n_pos)
        neg_scale, pos_scale = 0.5 / n_neg, 0.5 / n_pos
    elif n_neg:
        obj_loss = neg_bce_sum / n_neg
        neg_scale, pos_scale = 1.0 / n_neg, 0.0
    else:
        obj_loss = pos_bce_sum / max(n_pos, 1)
        neg_scale, pos_scale = 0.0, 1.0 / max(n_pos, 1)
    for s in SCALES:
        logits, tgt = neg_grids[s]
        dobj = (sigmoid(logits) - tgt) * np.where(tgt == 1.0, pos_scale, neg_scale) * w["obj"]
        gv = anchor_view(grads[s])
        gv[:, :, 4] += dobj.astype(gv.dtype)

    # box + class terms at the positives
    box_loss = 0.0
    cls_loss = 0.0
    for b, t in positives:
        s = t.scale
        stride = STRIDES[s]
        g = anchor_view(raw_by_scale[s])
        gv = anchor_view(grads[s])
        vec = g[b, t.anchor, :, t.cell_y, t.cell_x]

        sx, sy = float(sigmoid(vec[0:1])[0]), float(sigmoid(vec[1:2])[0])
        ax, ay = anchors[s][t.anchor]
        # the loss-side box uses an uncapped exp (value-limited for overflow
        # safety only) so an overshot size logit keeps a restoring gradient;
        # the inference decode applies the hard cap
        tw_c, th_c = min(float(vec[2]), _LOSS_WH_LIMIT), min(float(vec[3]), _LOSS_WH_LIMIT)
        bw, bh = ax * math.exp(tw_c), ay * math.exp(th_c)
        bx, by = (t.cell_x + sx) * stride, (t.cell_y + sy) * stride
        pred = (bx - bw / 2.0, by - bh / 2.0, bx + bw / 2.0, by + bh / 2.0)
        val, d_xyxy = _iou_with_grad(pred, t.box)
        box_loss += 1.0 - val

        # chain xyxy -> (tx, ty, tw, th)
        d_bx = d_xyxy[0] + d_xyxy[2]
        d_by = d_xyxy[1] + d_xyxy[3]
        d_bw = (d_xyxy[2] - d_xyxy[0]) / 2.0
        d_bh = (d_xyxy[3] - d_xyxy[1]) / 2.0
        coef = -w["box"] / n_pos  # loss is (1 - IoU)
        dtx = coef * d_bx * stride * sx * (1.0 - sx)
        dty = coef * d_by * stride * sy * (1.0 - sy)
        dtw = coef * d_bw * bw
        dth = coef * d_bh * bh
        gv[b, t.anchor, 0, t.cell_y, t.cell_x] += np.asarray(dtx, dtype=gv.dtype)
        gv[b, t.anchor, 1, t.cell_y, t.cell_x] += np.asarray(dty, dtype=gv.dtype)
        gv[b, t.anchor, 2, t.cell_y, t.cell_x] += np.asarray(dtw, dtype=gv.dtype)
        gv[b, t.anchor, 3, t.cell_y, t.cell_x] += np.asarray(dth, dtype=gv.dtype)

        cls_logits = vec[5:]
        tgt = np.zeros(NUM_CLASSES, dtype=cls_logits.dtype)
        tgt[t.class_id] = 1.0
        cls_loss += float(_bce_with_logits(cls_logits, tgt).sum())
        dcls = (sigmoid(cls_logits) - tgt) * (w["cls"] / n_pos)
        gv[b, t.anchor, 5:, t.cell_y, t.cell_x] += dcls.astype(gv.dtype)

    if n_pos:
        box_loss /= n_pos
        cls_loss /= n_pos
    total = w["box"] * box_loss + w["obj"] * obj_loss + w["cls"] * cls_loss
    if not math.isfinite(total):
        raise FloatingPointError("non-finite loss")
    return LossBreakdown(total, box_loss, obj_loss, cls_loss), grads


def train_head(
    head: DetectionHead,
    dataset: list[tuple[dict[str, np.ndarray], list[AssignedTarget]]],
    anchors: dict[str, list[tuple[float, float]]],
    lr: float = 0.01,
    batch_size: int = 8,
    epochs: int = 200,
    seed: int = 0,
    weights: dict[str, float] | None = None,
    cooldown_frac: float = 1.0,
    cooldown_floor: float = 0.01,
) -> list[float]:
    """Plain SGD on the head parameters; returns per-epoch mean total loss.

    ``lr`` is the initial learning rate; the final ``cooldown_frac`` of the
    run decays it linearly to ``cooldown_floor * lr``, which anneals the
    step-size oscillation the IoU term otherwise keeps alive (the box
    gradient is near-constant in magnitude around its optimum, so constant
    steps bounce instead of settling).

    ``dataset`` pairs single-image feature dicts ([C,H,W] per scale) with
    their assigned targets.  Deterministic for a fixed seed.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    rng = np.random.default_rng(seed)
    params = head.params()
    history: list[float] = []
    steps_per_epoch = (len(dataset) + batch_size - 1) // batch_size
    total_steps = epochs * steps_per_epoch
    hold = int(total_steps * (1.0 - cooldown_frac))
    step = 0
    for _ in range(epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(dataset), batch_size):
            idx = order[start : start + batch_size]
            feats = {
                s: np.stack([dataset[i][0][s] for i in idx]).astype(np.float32)
                for s in SCALES
            }
            targets = [dataset[i][1] for i in idx]
            cache: dict = {}
            raw = head.forward(feats, training=True, cache=cache)
            try:
                breakdown, d_raw = head_loss(raw, targets, anchors, weights=weights)
            except FloatingPointError as exc:
                raise FloatingPointError(f"training diverged at step {step}: {exc}") from exc
            head.backward(d_raw, cache, need_dx=False)  # features are data, not trained
            if step < hold:
                step_lr = lr
            else:
                frac = (step - hold) / max(total_steps - hold, 1)
                step_lr = lr * (1.0 - frac * (1.0 - cooldown_floor))
            sgd_step(params, step_lr)
            epoch_losses.append(breakdown.total)
            step += 1
        history.append(float(np.mean(epoch_losses)))
    return history


def kmeans_anchors(wh_pairs, k: int = 9, seed: int = 0, iters: int = 50) -> dict[str, list[tuple[float, float]]]:
    """Cluster label shapes into k anchors (1 - shape IoU distance) and bin
    them into P3/P4/P5 by ascending area."""
    data = np.asarray(list(wh_pairs), dtype=np.float64)
    if len(data) < k:
        raise ValueError(f"need at least {k} boxes to fit {k} anchors, got {len(data)}")
    rng = np.random.default_rng(seed)
    centers = data[rng.choice(len(data), size=k, replace=False)].copy()
    for _ in range(iters):
        dists = np.empty((len(data), k))
        for j in range(k):
            inter = np.minimum(data[:, 0], centers[j, 0]) * np.minimum(data[:, 1], centers[j, 1])
            union = data[:, 0] * data[:, 1] + centers[j, 0] * centers[j, 1] - inter
            dists[:, j] = 1.0 - inter / np.maximum(union, 1e-12)
        labels = dists.argmin(axis=1)
        for j in range(k):
            members = data[labels == j]
            if len(members):
                centers[j] = np.median(members, axis=0)
    order = np.argsort(centers[:, 0] * centers[:, 1])
    centers = centers[order]
    per_scale = k // len(SCALES)
    return {
        s: [tuple(map(float, c)) for c in centers[i * per_scale : (i + 1) * per_scale]]
        for i, s in enumerate(SCALES)
    }
