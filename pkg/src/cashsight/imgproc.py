"""Frame preprocessing: Gaussian blur, CLAHE contrast enhancement, sharpening,
and white-letterbox resizing to the 640x640 detector input.

Images are numpy uint8 arrays, row-major, either (H, W) grayscale or
(H, W, 3) in B,G,R channel order.  Every function returns a new array.

Conventions fixed here (and relied on by the test oracles):

* Gaussian sigma follows the usual size rule ``0.3*((k-1)*0.5 - 1) + 0.8``.
* All convolutions replicate edge pixels at the border.
* Float results round half-to-even (numpy ``rint``) before the uint8 clamp.
* BGR<->LAB uses the 8-bit D65 pipeline with the constants in
  ``_BGR2XYZ`` / ``_XYZ2BGR`` below; no gamma is applied (linear RGB).
* A CLAHE tile whose histogram is concentrated in a single bin keeps the
  identity mapping: equalizing a flat region is undefined and would only
  lift its brightness, so constant inputs are fixed points of the stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "gaussian_kernel_1d",
    "gaussian_kernel_2d",
    "gaussian_blur",
    "bgr_to_lab",
    "lab_to_bgr",
    "clahe_u8",
    "clahe_enhance",
    "sharpen",
    "preprocess_pipeline",
    "LetterboxTransform",
    "letterbox_square",
    "resize_bilinear",
]

SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float64)

# Linear RGB -> XYZ (D65) rows, inverse below; sRGB gamma applied first.
_RGB2XYZ = (
    (0.412453, 0.357580, 0.180423),
    (0.212671, 0.715160, 0.072169),
    (0.019334, 0.119193, 0.950227),
)
_XYZ2RGB = (
    (3.240479, -1.537150, -0.498535),
    (-0.969256, 1.875991, 0.041556),
    (0.055648, -0.204043, 1.057311),
)
_XN = 0.950456
_ZN = 1.088754
_LAB_T0 = 0.008856  # (6/29)^3 cube-root threshold
_LAB_A = 7.787  # slope of the linear segment
_LAB_B = 16.0 / 116.0

# 8-bit sRGB -> linear lookup (gamma 2.4 curve with the 0.04045 toe)
_U8 = np.arange(256, dtype=np.float64) / 255.0
_SRGB_TO_LINEAR = np.where(_U8 <= 0.04045, _U8 / 12.92, ((_U8 + 0.055) / 1.055) ** 2.4).astype(np.float32)


def _linear_to_srgb(lin: np.ndarray) -> np.ndarray:
    lin = np.clip(lin, 0.0, 1.0)
    return np.where(lin <= 0.0031308, 12.92 * lin, 1.055 * np.power(lin, 1.0 / 2.4) - 0.055)


def _check_image(img: np.ndarray, name: str = "img") -> None:
    if not isinstance(img, np.ndarray) or img.size == 0:
        raise ValueError(f"{name} is empty")
    if img.ndim not in (2, 3):
        raise ValueError(f"{name} must be 2-D grayscale or 3-D BGR, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] != 3:
        raise ValueError(f"{name} must have 3 channels, got {img.shape[2]}")


def _to_u8(x: np.ndarray) -> np.ndarray:
    if x.dtype in (np.float32, np.float64):
        np.rint(x, out=x)
        np.clip(x, 0, 255, out=x)
        return x.astype(np.uint8)
    return np.clip(np.rint(x), 0, 255).astype(np.uint8)


def gaussian_kernel_1d(kernel_size: int) -> np.ndarray:
    """Normalized 1-D Gaussian weights for an odd kernel size."""
    if kernel_size % 2 == 0 or kernel_size < 3:
        raise ValueError(f"kernel_size must be odd and >= 3, got {kernel_size}")
    sigma = 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8
    r = kernel_size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_kernel_2d(kernel_size: int) -> np.ndarray:
    k = gaussian_kernel_1d(kernel_size)
    return np.outer(k, k)


def _convolve_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Dense 2-D correlation per channel with edge replication, float32 out."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    chans = img if img.ndim == 3 else img[:, :, None]
    h, w, _ = chans.shape
    padded = np.pad(chans.astype(np.float32), ((ry, ry), (rx, rx), (0, 0)), mode="edge")
    acc = np.zeros((h, w, chans.shape[2]), dtype=np.float32)
    tmp = np.empty_like(acc)
    for i in range(kh):
        for j in range(kw):
            if kernel[i, j] == 0.0:
                continue
            np.multiply(padded[i : i + h, j : j + w], np.float32(kernel[i, j]), out=tmp)
            acc += tmp
    return acc[:, :, 0] if img.ndim == 2 else acc


def gaussian_blur(img: np.ndarray, kernel_size: int = 5) -> np.ndarray:
    """Blur with a normalized Gaussian; separable two-pass implementation."""
    _check_image(img)
    k = gaussian_kernel_1d(kernel_size).astype(np.float32)
    r = kernel_size // 2
    chans = img if img.ndim == 3 else img[:, :, None]
    h, w, _ = chans.shape

    x = np.pad(chans.astype(np.float32), ((r, r), (0, 0), (0, 0)), mode="edge")
    acc = np.multiply(x[0:h], k[0])
    tmp = np.empty_like(acc)
    for i in range(1, kernel_size):
        np.multiply(x[i : i + h], k[i], out=tmp)
        acc += tmp
    x = np.pad(acc, ((0, 0), (r, r), (0, 0)), mode="edge")
    np.multiply(x[:, 0:w], k[0], out=acc)
    for j in range(1, kernel_size):
        np.multiply(x[:, j : j + w], k[j], out=tmp)
        acc += tmp
    out = _to_u8(acc)
    return out[:, :, 0] if img.ndim == 2 else out


def sharpen(img: np.ndarray) -> np.ndarray:
    """3x3 cross sharpening (center 5, 4-neighbors -1), clamped to [0, 255]."""
    _check_image(img)
    return _to_u8(_convolve_replicate(img, SHARPEN_KERNEL))


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _LAB_T0, np.cbrt(t), np.float32(_LAB_A) * t + np.float32(_LAB_B))


def bgr_to_lab(img: np.ndarray) -> np.ndarray:
    """8-bit BGR -> LAB (L scaled to [0,255], a/b offset by 128).

    sRGB gamma is removed before the D65 XYZ transform, matching the
    common 8-bit pipeline.
    """
    _check_image(img)
    if img.ndim != 3:
        raise ValueError("bgr_to_lab expects a 3-channel BGR image")
    lin = _SRGB_TO_LINEAR[img]
    bch, gch, rch = lin[:, :, 0], lin[:, :, 1], lin[:, :, 2]
    (xr, xg, xb), (yr, yg, yb), (zr, zg, zb) = _RGB2XYZ
    fx = _lab_f((np.float32(xr) * rch + np.float32(xg) * gch + np.float32(xb) * bch) / np.float32(_XN))
    fy = _lab_f(np.float32(yr) * rch + np.float32(yg) * gch + np.float32(yb) * bch)
    fz = _lab_f((np.float32(zr) * rch + np.float32(zg) * gch + np.float32(zb) * bch) / np.float32(_ZN))
    lstar = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy) + 128.0
    b = 200.0 * (fy - fz) + 128.0
    return np.stack([_to_u8(lstar * (255.0 / 100.0)), _to_u8(a), _to_u8(b)], axis=2)


def lab_to_bgr(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`bgr_to_lab` (up to 8-bit quantization)."""
    _check_image(lab)
    lstar = lab[:, :, 0].astype(np.float32) * np.float32(100.0 / 255.0)
    a = lab[:, :, 1].astype(np.float32) - np.float32(128.0)
    b = lab[:, :, 2].astype(np.float32) - np.float32(128.0)
    fy = (lstar + np.float32(16.0)) / np.float32(116.0)
    fx = fy + a / np.float32(500.0)
    fz = fy - b / np.float32(200.0)

    # back through the cube on the curved segment, linearly below it
    def inv(t):
        cube = t * t * t
        return np.where(cube > _LAB_T0, cube, (t - np.float32(_LAB_B)) / np.float32(_LAB_A))

    y = inv(fy)
    x = inv(fx) * np.float32(_XN)
    z = inv(fz) * np.float32(_ZN)
    (rx, ry, rz), (gx, gy, gz), (bx, by, bz) = _XYZ2RGB
    rch = _linear_to_srgb(np.float32(rx) * x + np.float32(ry) * y + np.float32(rz) * z)
    gch = _linear_to_srgb(np.float32(gx) * x + np.float32(gy) * y + np.float32(gz) * z)
    bch = _linear_to_srgb(np.float32(bx) * x + np.float32(by) * y + np.float32(bz) * z)
    return np.stack([_to_u8(bch * 255.0), _to_u8(gch * 255.0), _to_u8(rch * 255.0)], axis=2)


def _clahe_tile_luts(channel: np.ndarray, clip_limit: float, tiles: tuple[int, int]) -> np.ndarray:
    """Per-tile uint8 lookup tables, (grid_y, grid_x, 256)."""
    gy, gx = tiles[1], tiles[0]
    h, w = channel.shape
    th, tw = h // gy, w // gx
    area = th * tw
    blocks = channel.reshape(gy, th, gx, tw).transpose(0, 2, 1, 3).reshape(gy * gx, area)
    offsets = np.arange(gy * gx)[:, None] * 256
    hist = np.bincount((blocks.astype(np.int64) + offsets).ravel(), minlength=gy * gx * 256)
    hist = hist.reshape(gy * gx, 256)

    luts = np.empty((gy * gx, 256), dtype=np.uint8)
    identity = np.arange(256, dtype=np.uint8)
    clip = max(int(clip_limit * area / 256.0), 1) if clip_limit > 0 else 0
    scale = 255.0 / area
    for t in range(gy * gx):
        hst = hist[t]
        if np.count_nonzero(hst) <= 1:
            luts[t] = identity  # flat tile: nothing to equalize
            continue
        if clip:
            hst = np.minimum(hst, clip)
            excess = int(area - hst.sum())
            hst = hst + excess // 256
            residual = excess - (excess // 256) * 256
            if residual:
                step = max(256 // residual, 1)
                hst[0 : residual * step : step] += 1
        luts[t] = _to_u8(np.cumsum(hst) * scale)
    return luts.reshape(gy, gx, 256)


def clahe_u8(channel: np.ndarray, clip_limit: float = 5.0, tiles: tuple[int, int] = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization of one uint8 channel.

    Tile-wise clipped histogram equalization with bilinear blending between
    the four surrounding tile mappings.  The clipped excess is redistributed
    evenly across all bins (remainder spread at a fixed stride), matching the
    classic implementation.  Images not divisible by the grid are reflected
    out to the next multiple and cropped back afterwards.
    """
    _check_image(channel, "channel")
    if channel.ndim != 2:
        raise ValueError("clahe_u8 expects a single-channel image")
    gy, gx = tiles[1], tiles[0]
    h, w = channel.shape
    if h < gy or w < gx:
        raise ValueError(f"image {w}x{h} smaller than tile grid {tiles}")
    pad_y = (-h) % gy
    pad_x = (-w) % gx
    work = np.pad(channel, ((0, pad_y), (0, pad_x)), mode="reflect") if (pad_y or pad_x) else channel
    hh, ww = work.shape
    th, tw = hh // gy, ww // gx

    luts = _clahe_tile_luts(work, clip_limit, tiles)

    tyf = np.arange(hh, dtype=np.float32) / np.float32(th) - np.float32(0.5)
    txf = np.arange(ww, dtype=np.float32) / np.float32(tw) - np.float32(0.5)
    ty1 = np.floor(tyf).astype(np.int64)
    tx1 = np.floor(txf).astype(np.int64)
    ya = (tyf - ty1)[:, None]
    xa = (txf - tx1)[None, :]
    ty1c = np.clip(ty1, 0, gy - 1)
    ty2c = np.clip(ty1 + 1, 0, gy - 1)
    tx1c = np.clip(tx1, 0, gx - 1)
    tx2c = np.clip(tx1 + 1, 0, gx - 1)

    v = work
    top = luts[ty1c[:, None], tx1c[None, :], v] * (1 - xa) + luts[ty1c[:, None], tx2c[None, :], v] * xa
    bot = luts[ty2c[:, None], tx1c[None, :], v] * (1 - xa) + luts[ty2c[:, None], tx2c[None, :], v] * xa
    out = _to_u8(top * (1 - ya) + bot * ya)
    return out[:h, :w]


def clahe_enhance(img: np.ndarray, clip_limit: float = 5.0, tiles: tuple[int, int] = (8, 8)) -> np.ndarray:
    """CLAHE on the lightness channel of a BGR image (LAB round trip)."""
    _check_image(img)
    if img.ndim != 3:
        raise ValueError("clahe_enhance is defined on 3-channel BGR frames")
    lab = bgr_to_lab(img)
    lab[:, :, 0] = clahe_u8(lab[:, :, 0], clip_limit=clip_limit, tiles=tiles)
    return lab_to_bgr(lab)


def preprocess_pipeline(
    img: np.ndarray,
    kernel_size: int = 5,
    clip_limit: float = 5.0,
    tiles: tuple[int, int] = (8, 8),
) -> np.ndarray:
    """Gaussian blur -> CLAHE -> sharpen, in that order, deterministic."""
    return sharpen(clahe_enhance(gaussian_blur(img, kernel_size), clip_limit, tiles))


@dataclass(frozen=True)
class LetterboxTransform:
    """Maps original-image coordinates into the padded square canvas."""

    scale: float
    pad_left: int
    pad_top: int
    original_width: int
    original_height: int

    def forward_xy(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.pad_left, y * self.scale + self.pad_top

    def inverse_xy(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.pad_left) / self.scale, (y - self.pad_top) / self.scale

    def forward_box(self, box) -> tuple[float, float, float, float]:
        x1, y1 = self.forward_xy(box[0], box[1])
        x2, y2 = self.forward_xy(box[2], box[3])
        return x1, y1, x2, y2

    def inverse_box(self, box) -> tuple[float, float, float, float]:
        x1, y1 = self.inverse_xy(box[0], box[1])
        x2, y2 = self.inverse_xy(box[2], box[3])
        return x1, y1, x2, y2


def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers (identity when sizes match)."""
    _check_image(img)
    h, w = img.shape[:2]
    if (new_w, new_h) == (w, h):
        return img.copy()
    sx = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
    sy = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(sx - x0, 0.0, 1.0)
    fy = np.clip(sy - y0, 0.0, 1.0)

    chans = img if img.ndim == 3 else img[:, :, None]
    a = chans[y0[:, None], x0[None, :]].astype(np.float64)
    b = chans[y0[:, None], x1[None, :]].astype(np.float64)
    c = chans[y1[:, None], x0[None, :]].astype(np.float64)
    d = chans[y1[:, None], x1[None, :]].astype(np.float64)
    wx = fx[None, :, None]
    wy = fy[:, None, None]
    out = (a * (1 - wx) + b * wx) * (1 - wy) + (c * (1 - wx) + d * wx) * wy
    out = _to_u8(out)
    return out[:, :, 0] if img.ndim == 2 else out


def letterbox_square(
    img: np.ndarray, target: int = 640, pad_value: int = 255
) -> tuple[np.ndarray, LetterboxTransform]:
    """Aspect-preserving resize onto a target x target canvas, padded white.

    Returns the canvas and the coordinate transform; odd pad totals put the
    extra pixel on the right/bottom.
    """
    _check_image(img)
    if target <= 0:
        raise ValueError(f"target must be positive, got {target}")
    h, w = img.shape[:2]
    scale = target / max(w, h)
    new_w = max(1, int(round(w * scale)))
    new_h = max(1, int(round(h * scale)))
    resized = resize_bilinear(img, new_w, new_h)
    pad_left = (target - new_w) // 2
    pad_top = (target - new_h) // 2
    if img.ndim == 3:
        canvas = np.full((target, target, 3), pad_value, dtype=np.uint8)
        canvas[pad_top : pad_top + new_h, pad_left : pad_left + new_w, :] = resized
    else:
        canvas = np.full((target, target), pad_value, dtype=np.uint8)
        canvas[pad_top : pad_top + new_h, pad_left : pad_left + new_w] = resized
    tf = LetterboxTransform(scale=scale, pad_left=pad_left, pad_top=pad_top, original_width=w, original_height=h)
    return canvas, tf
