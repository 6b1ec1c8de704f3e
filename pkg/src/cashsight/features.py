"""Pluggable multi-scale feature provider.

The backbone/neck are deliberately not reimplemented here: the detector head
only needs P3/P4/P5 maps of the right shape.  Two sources exist:

* ``mock``: a fixed seeded random projection of 8x8 image patches, average
  pooled down for the coarser scales.  Deterministic in (image, seed) and
  sensitive to any pixel change; good enough to exercise and overfit the
  head at desk scale.
* ``file``: a DNM1 container with entries ``P3``/``P4``/``P5`` captured
  elsewhere (e.g. an exported real backbone), replayed for every frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import ContainerFormatError, load_container, save_container
from .tensorops import ShapeError

SPATIAL = {"P3": 80, "P4": 40, "P5": 20}
PATCH = 8


@dataclass(frozen=True)
class FeatureSet:
    """P3/P4/P5 maps shaped [1, C, S, S] with S = 80/40/20."""

    p3: np.ndarray
    p4: np.ndarray
    p5: np.ndarray
    source: str = "mock"

    def __post_init__(self):
        for name, arr in (("P3", self.p3), ("P4", self.p4), ("P5", self.p5)):
            want = SPATIAL[name]
            if arr.ndim != 4 or arr.shape[0] != 1 or arr.shape[2:] != (want, want):
                raise ShapeError(f"{name} must be [1,C,{want},{want}], got {arr.shape}")

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"P3": self.p3, "P4": self.p4, "P5": self.p5}


def _projections(seed: int, channels: tuple[int, int, int]):
    rng = np.random.default_rng(seed)
    dim = PATCH * PATCH * 3
    return [(rng.standard_normal((dim, c)) / np.sqrt(dim)).astype(np.float32) for c in channels]


class MockFeatureProvider:
    """Seeded random-projection features from 8x8 patches of the frame."""

    def __init__(self, seed: int = 7, channels: tuple[int, int, int] = (64, 128, 256)):
        self.seed = seed
        self.channels = channels
        self._w3, self._w4, self._w5 = _projections(seed, channels)

    def extract(self, img: np.ndarray) -> FeatureSet:
        if img.shape != (640, 640, 3):
            raise ShapeError(f"mock features need a 640x640x3 frame, got {img.shape}")
        x = img.astype(np.float32) / 255.0 - 0.5
        # [80, 80, 8*8*3] patch matrix
        patches = x.reshape(80, PATCH, 80, PATCH, 3).transpose(0, 2, 1, 3, 4).reshape(80, 80, -1)
        p4_patches = patches.reshape(40, 2, 40, 2, patches.shape[-1]).mean(axis=(1, 3))
        p5_patches = patches.reshape(20, 4, 20, 4, patches.shape[-1]).mean(axis=(1, 3))
        p3 = np.tanh(patches @ self._w3).transpose(2, 0, 1)[None]
        p4 = np.tanh(p4_patches @ self._w4).transpose(2, 0, 1)[None]
        p5 = np.tanh(p5_patches @ self._w5).transpose(2, 0, 1)[None]
        return FeatureSet(np.ascontiguousarray(p3), np.ascontiguousarray(p4), np.ascontiguousarray(p5), source="mock")


class FileFeatureProvider:
    """Replays one captured FeatureSet for every frame (debug/replay source)."""

    def __init__(self, path):
        self.path = path
        self._fs = file_features_load(path)

    def extract(self, img: np.ndarray) -> FeatureSet:
        return self._fs


def file_features_save(fs: FeatureSet, path) -> None:
    save_container(path, {"P3": fs.p3, "P4": fs.p4, "P5": fs.p5})


def file_features_load(path) -> FeatureSet:
    entries = load_container(path)
    arrays = {}
    for name in ("P3", "P4", "P5"):
        if name not in entries:
            raise ContainerFormatError(f"missing entry {name!r} in feature container")
        arr = entries[name]
        want = SPATIAL[name]
        if arr.ndim != 4 or arr.shape[0] != 1 or arr.shape[2:] != (want, want):
            raise ContainerFormatError(f"entry {name!r}: dims {arr.shape} do not match [1,C,{want},{want}]")
        arrays[name] = arr
    return FeatureSet(arrays["P3"], arrays["P4"], arrays["P5"], source="file")


def make_provider(source: str, seed: int = 7, path=None, p5_channels: int = 256):
    if source == "mock":
        return MockFeatureProvider(seed=seed, channels=(64, 128, p5_channels))
    if source == "file":
        if path is None:
            raise ValueError("features.source=file requires features.dir")
        return FileFeatureProvider(path)
    raise ValueError(f"unknown feature source {source!r}")
