"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, obvious way (scalar loops,
exhaustive enumeration) and stays independent of the vectorized library
paths it checks.
"""

import math

import numpy as np

from cashsight.head import iou


def convolve2d_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Scalar 2-D correlation per channel, float64, edge replication."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    chans = img if img.ndim == 3 else img[:, :, None]
    h, w, c = chans.shape
    out = np.zeros((h, w, c), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                acc = 0.0
                for i in range(kh):
                    for j in range(kw):
                        yy = min(max(y + i - ry, 0), h - 1)
                        xx = min(max(x + j - rx, 0), w - 1)
                        acc += kernel[i, j] * float(chans[yy, xx, ch])
                out[y, x, ch] = acc
    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out[:, :, 0] if img.ndim == 2 else out


def conv2d_scalar(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, padding: int) -> np.ndarray:
    """Nested-loop cross-correlation, accumulation in (c, kh, kw) order."""
    b, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho, wo = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
    out = np.zeros((b, o, ho, wo), dtype=np.float64)
    for bi in range(b):
        for oi in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[bi, ci, oy + i, ox + j] * weight[oi, ci, i, j]
                    out[bi, oi, oy, ox] = acc + bias[oi]
    return out


def clahe_scalar(channel: np.ndarray, clip_limit: float, tiles: tuple) -> np.ndarray:
    """Loop-based CLAHE with the same documented conventions as the library:
    clip = max(int(limit*area/256), 1); even redistribution with strided
    remainder; single-populated-bin tiles map to identity; bilinear blend of
    the four surrounding tile LUTs; reflected padding to a grid multiple."""
    gx, gy = tiles[0], tiles[1]
    h, w = channel.shape
    pad_y = (-h) % gy
    pad_x = (-w) % gx
    work = np.pad(channel, ((0, pad_y), (0, pad_x)), mode="reflect") if (pad_y or pad_x) else channel
    hh, ww = work.shape
    th, tw = hh // gy, ww // gx
    area = th * tw
    clip = max(int(clip_limit * area / 256.0), 1) if clip_limit > 0 else 0

    luts = np.zeros((gy, gx, 256), dtype=np.uint8)
    for ty in range(gy):
        for tx in range(gx):
            hist = [0] * 256
            for y in range(ty * th, (ty + 1) * th):
                for x in range(tx * tw, (tx + 1) * tw):
                    hist[work[y, x]] += 1
            if sum(1 for v in hist if v) <= 1:
                luts[ty, tx] = np.arange(256, dtype=np.uint8)
                continue
            if clip:
                excess = 0
                for i in range(256):
                    if hist[i] > clip:
                        excess += hist[i] - clip
                        hist[i] = clip
                for i in range(256):
                    hist[i] += excess // 256
                residual = excess - (excess // 256) * 256
                if residual:
                    step = max(256 // residual, 1)
                    i = 0
                    while residual > 0 and i < 256:
                        hist[i] += 1
                        residual -= 1
                        i += step
            cum = 0
            for i in range(256):
                cum += hist[i]
                luts[ty, tx, i] = min(max(int(np.rint(cum * 255.0 / area)), 0), 255)

    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        tyf = y / th - 0.5
        ty1 = math.floor(tyf)
        ya = tyf - ty1
        ty1c = min(max(ty1, 0), gy - 1)
        ty2c = min(max(ty1 + 1, 0), gy - 1)
        for x in range(w):
            txf = x / tw - 0.5
            tx1 = math.floor(txf)
            xa = txf - tx1
            tx1c = min(max(tx1, 0), gx - 1)
            tx2c = min(max(tx1 + 1, 0), gx - 1)
            v = work[y, x]
            top = luts[ty1c, tx1c, v] * (1 - xa) + luts[ty1c, tx2c, v] * xa
            bot = luts[ty2c, tx1c, v] * (1 - xa) + luts[ty2c, tx2c, v] * xa
            out[y, x] = min(max(int(np.rint(top * (1 - ya) + bot * ya)), 0), 255)
    return out


def nms_reference(dets: list, iou_threshold: float) -> list:
    """Characterization oracle: test every subset; exactly one satisfies the
    greedy membership condition (kept iff no higher-priority kept same-class
    box overlaps at or above the threshold)."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].box[0], dets[i].box[1]))
    rank = {idx: r for r, idx in enumerate(order)}
    n = len(dets)
    solutions = []
    for mask in range(1 << n):
        subset = {i for i in range(n) if mask >> i & 1}
        valid = True
        for i in range(n):
            suppressors = [
                k
                for k in subset
                if rank[k] < rank[i] and dets[k].class_id == dets[i].class_id and iou(dets[k].box, dets[i].box) >= iou_threshold
            ]
            member = i in subset
            if member == bool(suppressors):
                valid = False
                break
        if valid:
            solutions.append(subset)
    assert len(solutions) == 1, f"expected a unique greedy subset, got {len(solutions)}"
    keep = solutions[0]
    return [dets[i] for i in order if i in keep]


def ap_brute_force(scored: list, gt_count: int) -> float:
    """O(n^2) all-point interpolated AP: integrate max precision at recall
    >= r over every distinct recall step."""
    if gt_count == 0:
        return 0.0
    ordered = sorted(scored, key=lambda t: -t[0])
    points = []
    tp = 0
    for rank, (_, is_tp) in enumerate(ordered, start=1):
        tp += bool(is_tp)
        points.append((tp / gt_count, tp / rank))
    ap = 0.0
    prev_r = 0.0
    for r, _ in sorted(set(points)):
        if r <= prev_r:
            continue
        envelope = max((p for rr, p in points if rr >= r), default=0.0)
        ap += (r - prev_r) * envelope
        prev_r = r
    return ap


def match_recursive(preds: list, gts: list, iou_threshold: float):
    """Assignment oracle: the top-priority prediction scans every ground
    truth for its best eligible partner, then the rest recurse."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].box[0], preds[i].box[1]))

    def go(remaining_preds, taken):
        if not remaining_preds:
            return []
        pi = remaining_preds[0]
        best_gi, best = -1, 0.0
        for gi, (gbox, gcls) in enumerate(gts):
            if gi in taken or gcls != preds[pi].class_id:
                continue
            val = iou(preds[pi].box, gbox)
            if val >= iou_threshold and val > best:
                best_gi, best = gi, val
        if best_gi >= 0:
            return [(pi, best_gi)] + go(remaining_preds[1:], taken | {best_gi})
        return go(remaining_preds[1:], taken)

    return go(order, set())


def rotate_box_corners(cx, cy, w, h, angle_degrees):
    """AABB of a box's four corners rotated about (0.5, 0.5)."""
    th = math.radians(angle_degrees)
    c, s = math.cos(th), math.sin(th)
    pts = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        x, y = cx + dx - 0.5, cy + dy - 0.5
        pts.append((0.5 + c * x - s * y, 0.5 + s * x + c * y))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return min(xs), min(ys), max(xs), max(ys)
