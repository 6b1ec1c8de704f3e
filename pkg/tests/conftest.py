import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "desk",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("desk")


def textured_bgr(seed: int, h: int = 128, w: int = 128) -> np.ndarray:
    """Deterministic synthetic photo: gradients + blobs + noise."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    base = np.stack(
        [
            120 + 80 * np.sin(xx / 17.0) + 30 * np.cos(yy / 11.0),
            100 + 60 * np.cos((xx + yy) / 23.0),
            90 + 90 * np.sin(yy / 13.0),
        ],
        axis=2,
    )
    for _ in range(6):
        cy, cx = rng.integers(0, h), rng.integers(0, w)
        r = rng.integers(4, max(max(h, w) // 4, 5))
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        base[mask] += rng.integers(-70, 70, size=3)
    base += rng.normal(0, 6, size=base.shape)
    return np.clip(base, 0, 255).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
