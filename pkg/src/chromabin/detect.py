"""FAST-9 corner detection with sum-of-absolute-differences response."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .descriptors import Keypoint
from .imagery import ColorSpace, ImageError, PlanarImage


@dataclass(frozen=True)
class DetectorConfig:
    threshold: int = 20
    max_keypoints: int = 512
    nms_radius: int = 3

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError(f"threshold must be >= 1, got {self.threshold}")
        if self.max_keypoints < 1:
            raise ValueError(f"max_keypoints must be >= 1, got {self.max_keypoints}")
        if self.nms_radius < 0:
            raise ValueError(f"nms_radius must be >= 0, got {self.nms_radius}")


def segment_scores(plane: np.ndarray, threshold: int) -> np.ndarray:
    """Per-pixel FAST-9 response; zero where the segment test fails."""
    plane = np.ascontiguousarray(plane, dtype=np.uint8)
    return _backend.kernels.fast_scores(plane, int(threshold))


def suppress(scores: np.ndarray, radius: int) -> np.ndarray:
    """Mask of positive-score pixels that win their ``(2r+1)^2`` neighbourhood.

    Equal scores are resolved in favour of the smaller ``(y, x)``.
    """
    keep = scores > 0
    if radius == 0:
        return keep
    h, w = scores.shape
    padded = np.pad(scores, radius)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            neighbour = padded[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
            earlier = dy < 0 or (dy == 0 and dx < 0)
            beaten = neighbour > scores
            if earlier:
                beaten |= neighbour == scores
            keep &= ~beaten
    return keep


def detect_fast(img: PlanarImage, cfg: DetectorConfig = DetectorConfig()) -> list[Keypoint]:
    """Strongest FAST-9 corners, sorted by descending response then ``(y, x)``."""
    if img.space is not ColorSpace.GRAY:
        raise ImageError(f"detect_fast expects a gray image, got {img.space.value}")
    if img.width < 7 or img.height < 7:
        raise ImageError(f"image {img.width}x{img.height} is smaller than 7x7")
    scores = segment_scores(img.planes[0], cfg.threshold)
    ys, xs = np.nonzero(suppress(scores, cfg.nms_radius))
    response = scores[ys, xs]
    order = np.lexsort((xs, ys, -response.astype(np.int64)))[:cfg.max_keypoints]
    return [Keypoint(int(xs[i]), int(ys[i]), float(response[i])) for i in order]


def save_keypoints(keypoints, path) -> None:
    lines = [f"{kp.x} {kp.y} {kp.response:g}\n" for kp in keypoints]
    Path(path).write_text("".join(lines))


def load_keypoints(path) -> list[Keypoint]:
    keypoints = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 'x y [response]'")
        try:
            # external detectors report sub-pixel positions; sample on the nearest pixel
            x, y = (int(np.floor(float(v) + 0.5)) for v in fields[:2])
            response = float(fields[2]) if len(fields) == 3 else 0.0
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed keypoint {line!r}") from None
        keypoints.append(Keypoint(x, y, response))
    return keypoints
