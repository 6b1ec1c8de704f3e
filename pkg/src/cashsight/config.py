"""Runtime configuration.

All tunables live in one JSON file with per-subsystem sections, e.g.::

    {
      "server":     {"port": 8765, "max_frame_bytes": 2097152},
      "preprocess": {"gaussian_kernel": 5, "clahe_clip": 5.0,
                     "clahe_tiles": [8, 8], "enabled": true},
      "head":       {"conf_threshold": 0.25, "nms_iou": 0.45,
                     "p5_channels": 256, "anchors": {...}},
      "features":   {"source": "mock", "dir": null, "seed": 7},
      "assist":     {"window_ms": 3000, "grace_ms": 1000, "min_frames": 5,
                     "conf_threshold": 0.5, "hold_ms": 1500, "tap_gap_ms": 400},
      "speech":     {"announce": "{amount} {unit}", ...}
    }

Missing sections/keys fall back to the defaults below.  Dotted names used
in docs (``head.conf_threshold``) map to ``section.key`` in the JSON.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

# Canonical anchor shapes (width, height) in pixels at 640x640 input,
# three per scale.  Overridable via head.anchors in the config file.
DEFAULT_ANCHORS = {
    "P3": [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    "P4": [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
    "P5": [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
}


@dataclass
class PreprocessConfig:
    gaussian_kernel: int = 5
    clahe_clip: float = 5.0
    clahe_tiles: tuple[int, int] = (8, 8)
    enabled: bool = True


@dataclass
class HeadConfig:
    anchors: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_ANCHORS.items()})
    conf_threshold: float = 0.25
    nms_iou: float = 0.45
    p5_channels: int = 256
    params_path: str | None = None  # DNM1 file; None -> seeded random init
    init_seed: int = 0


@dataclass
class FeaturesConfig:
    source: str = "mock"  # mock | file
    dir: str | None = None
    seed: int = 7


@dataclass
class AssistConfig:
    window_ms: int = 3000
    grace_ms: int = 1000
    min_frames: int = 5
    conf_threshold: float = 0.5
    hold_ms: int = 1500
    tap_gap_ms: int = 400
    tap_max_press_ms: int = 300


@dataclass
class SpeechConfig:
    """Speech string templates; one place so clients can localize."""

    announce: str = "{amount} {unit}"
    total: str = "total {total} {unit}"
    removed: str = "removed {amount} {unit}, total {total} {unit}"
    canceled: str = "canceled"
    no_currency: str = "no currency detected"
    nothing_to_undo: str = "nothing to undo"


@dataclass
class ServerConfig:
    port: int = 8765
    host: str = "127.0.0.1"
    max_frame_bytes: int = 2 * 1024 * 1024
    static_dir: str | None = None


@dataclass
class Config:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    features: FeaturesConfig = field(default_factory=FeaturesConfig)
    assist: AssistConfig = field(default_factory=AssistConfig)
    speech: SpeechConfig = field(default_factory=SpeechConfig)
    server: ServerConfig = field(default_factory=ServerConfig)


def _merge_section(cls, data: dict):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {cls.__name__.lower()}.{key}")
        if key == "clahe_tiles":
            value = tuple(int(v) for v in value)
        if key == "anchors":
            value = {scale: [tuple(float(x) for x in wh) for wh in per] for scale, per in value.items()}
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: str | Path | None = None) -> Config:
    """Load a JSON config file, falling back to defaults for absent keys.

    Raises FileNotFoundError for a missing path and ValueError for unknown
    keys (typos should fail loudly, not be silently ignored).
    """
    if path is None:
        return Config()
    raw = json.loads(Path(path).read_text())
    sections = {
        "preprocess": PreprocessConfig,
        "head": HeadConfig,
        "features": FeaturesConfig,
        "assist": AssistConfig,
        "speech": SpeechConfig,
        "server": ServerConfig,
    }
    kwargs = {}
    for name, data in raw.items():
        if name not in sections:
            raise ValueError(f"unknown config section {name!r}")
        kwargs[name] = _merge_section(sections[name], data)
    return Config(**kwargs)


def config_to_dict(cfg: Config) -> dict:
    return dataclasses.asdict(cfg)
