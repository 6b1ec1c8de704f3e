"""PNG/JPEG reading and writing for uint8 BGR frames (Pillow-backed)."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


def read_bgr(path: str | Path) -> np.ndarray:
    """Load an image file as (H, W, 3) uint8 BGR."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return rgb[:, :, ::-1].copy()


def write_bgr(path: str | Path, img: np.ndarray, quality: int = 95) -> None:
    if img.ndim == 2:
        pil = Image.fromarray(img, mode="L")
    else:
        pil = Image.fromarray(img[:, :, ::-1])
    pil.save(path, quality=quality)


def decode_image_bytes(data: bytes) -> np.ndarray:
    """Decode encoded JPEG/PNG bytes to BGR; ValueError if undecodable."""
    try:
        with Image.open(io.BytesIO(data)) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"undecodable image payload: {exc}") from exc
    return rgb[:, :, ::-1].copy()


def encode_jpeg(img: np.ndarray, quality: int = 85) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img[:, :, ::-1] if img.ndim == 3 else img).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()
