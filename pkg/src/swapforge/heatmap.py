"""Explicit structure representation: landmark heatmap stacks.

Each landmark is rendered as an unnormalized Gaussian bump
``exp(-d^2 / (2 sigma^2))`` on the heatmap grid, one channel per landmark.
Landmark providers are pluggable; the built-in ones return stored or
synthetically generated landmarks so the whole pipeline runs without any
pretrained detector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ExtractionError, ValidationError
from .media import FaceFrame

DEFAULT_LANDMARK_COUNT = 68  # conventional facial-landmark topology
DEFAULT_HEATMAP_SIZE = (64, 64)
DEFAULT_RENDER_SIGMA = 2.0  # px at 64x64, scaled proportionally with resolution


@dataclass(frozen=True)
class HeatmapStack:
    channels: np.ndarray  # K x H' x W', values in [0, 1]
    render_sigma: float

    def __post_init__(self):
        ch = np.asarray(self.channels)
        if ch.ndim != 3:
            raise ValidationError(f"heatmap stack must be KxHxW, got shape {ch.shape}")
        if self.render_sigma <= 0:
            raise DomainError("render_sigma must be positive")
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def landmark_count(self) -> int:
        return self.channels.shape[0]


class LandmarkProvider:
    """Plug-in contract: given a frame, return K 2D points (pixel coords).

    K must be constant across all calls within one pipeline. Failure is an
    explicit ExtractionError, never a silent default.
    """

    def landmarks(self, frame: FaceFrame) -> np.ndarray:
        raise NotImplementedError


class StoredLandmarkProvider(LandmarkProvider):
    """Returns the landmarks carried by the frame itself."""

    def landmarks(self, frame: FaceFrame) -> np.ndarray:
        if frame.landmarks is None:
            raise ExtractionError(
                f"frame {frame.identity!r}#{frame.frame_index} carries no landmarks"
            )
        return np.asarray(frame.landmarks, dtype=np.float64)


def render_heatmap(
    points: np.ndarray,
    frame_size: tuple[int, int],
    sigma: float = DEFAULT_RENDER_SIGMA,
    out_size: tuple[int, int] = DEFAULT_HEATMAP_SIZE,
) -> HeatmapStack:
    """Render K landmark points (frame pixel coords) into a K-channel stack."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    h, w = frame_size
    oh, ow = out_size
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError(f"landmarks must be Kx2, got shape {pts.shape}")
    if (pts[:, 0] < 0).any() or (pts[:, 0] > w - 1).any() or (pts[:, 1] < 0).any() or (pts[:, 1] > h - 1).any():
        raise ValidationError("landmark out of image bounds")
    # map frame coords onto the heatmap grid
    scaled = np.empty_like(pts)
    scaled[:, 0] = pts[:, 0] * (ow / w)
    scaled[:, 1] = pts[:, 1] * (oh / h)
    ys = np.arange(oh, dtype=np.float64)[:, None]
    xs = np.arange(ow, dtype=np.float64)[None, :]
    channels = np.empty((len(pts), oh, ow), dtype=np.float64)
    for k, (x, y) in enumerate(scaled):
        d2 = (xs - x) ** 2 + (ys - y) ** 2
        channels[k] = np.exp(-d2 / (2.0 * sigma * sigma))
    return HeatmapStack(channels=np.clip(channels, 0.0, 1.0), render_sigma=sigma)


def extract_heatmap(
    frame: FaceFrame,
    provider: LandmarkProvider,
    sigma: float = DEFAULT_RENDER_SIGMA,
    out_size: tuple[int, int] = DEFAULT_HEATMAP_SIZE,
) -> HeatmapStack:
    try:
        pts = provider.landmarks(frame)
    except ExtractionError:
        raise
    except Exception as exc:  # provider misbehaved
        raise ExtractionError(
            f"landmark provider failed on frame {frame.identity!r}#{frame.frame_index}: {exc}"
        ) from exc
    return render_heatmap(pts, (frame.height, frame.width), sigma=sigma, out_size=out_size)
