"""Canonical image/video/mask data model, manifest serialization, and clip I/O.

Pixels are reals in [0, 1] everywhere inside the toolkit; conversion to 8-bit
happens only at container boundaries. The reference clip container is a
directory of numbered lossless PNG files plus a ``meta.json`` file, so tests
have a bit-exact path. Compressed video files are supported behind the same
load/write interface when OpenCV can decode them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from .errors import ArityError, DecodeError, ShapeMismatchError, ValidationError

DISTORTION_KINDS = (
    "color_saturation",
    "block_wise",
    "color_contrast",
    "gaussian_blur",
    "gaussian_noise",
    "jpeg_compression",
    "video_compression",
)

MANIFEST_FORMAT = "swapforge-manifest.v1"
CLIP_META_FORMAT = "swapforge-clip.v1"

SPLITS = ("train", "val", "test", "hidden")
LABELS = ("real", "fake", "unknown")


@dataclass(frozen=True)
class DistortionSpec:
    """One (type, level) perturbation instruction."""

    kind: str
    level: int

    def __post_init__(self):
        if self.kind not in DISTORTION_KINDS:
            raise ValidationError(f"unknown distortion kind {self.kind!r}")
        if not 1 <= int(self.level) <= 5:
            raise ValidationError(f"distortion level must be in 1..5, got {self.level}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "level": self.level}

    @classmethod
    def from_dict(cls, d: dict) -> "DistortionSpec":
        return cls(kind=d["kind"], level=int(d["level"]))


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FaceFrame:
    """One cropped face image with optional landmarks and an identity tag."""

    pixels: np.ndarray  # H x W x 3, reals in [0, 1]
    identity: str = ""
    frame_index: int = 0
    landmarks: np.ndarray | None = None  # K x 2 (x, y) pixel coordinates

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64 if np.asarray(self.pixels).dtype == np.float64 else np.float32)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"pixels must be HxWx3, got shape {px.shape}")
        h, w = px.shape[:2]
        if h < 8 or w < 8:
            raise ValidationError(f"frame too small: {h}x{w}, need at least 8x8")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValidationError("pixel values must lie in [0, 1]")
        if self.frame_index < 0:
            raise ValidationError("frame_index must be >= 0")
        object.__setattr__(self, "pixels", _freeze(px))
        if self.landmarks is not None:
            lm = np.asarray(self.landmarks, dtype=np.float64)
            if lm.ndim != 2 or lm.shape[1] != 2:
                raise ValidationError(f"landmarks must be Kx2, got shape {lm.shape}")
            if (lm[:, 0] < 0).any() or (lm[:, 0] > w - 1).any() or (lm[:, 1] < 0).any() or (lm[:, 1] > h - 1).any():
                raise ValidationError("landmark coordinates out of image bounds")
            object.__setattr__(self, "landmarks", _freeze(lm))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Mask:
    """H x W face-region mask; binary or blurred."""

    values: np.ndarray
    kind: str = "binary"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValidationError(f"mask must be HxW, got shape {v.shape}")
        if self.kind not in ("binary", "blurred"):
            raise ValidationError(f"mask kind must be binary or blurred, got {self.kind!r}")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValidationError("mask values must lie in [0, 1]")
        if self.kind == "binary" and not np.isin(v, (0.0, 1.0)).all():
            raise ValidationError("binary mask may contain only {0, 1}")
        object.__setattr__(self, "values", _freeze(v))


@dataclass(frozen=True)
class VideoClip:
    """Ordered sequence of FaceFrames with a label."""

    frames: tuple
    fps: float
    clip_id: str
    label: str = "unknown"

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise ArityError(f"a clip needs at least 2 frames, got {len(frames)}")
        if self.fps <= 0:
            raise ValidationError("fps must be positive")
        if self.label not in LABELS:
            raise ValidationError(f"label must be one of {LABELS}, got {self.label!r}")
        h, w = frames[0].height, frames[0].width
        for f in frames:
            if (f.height, f.width) != (h, w):
                raise ShapeMismatchError("all frames in a clip must share HxW")
        idx = [f.frame_index for f in frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError("frame_index must be strictly increasing within a clip")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def identity(self) -> str:
        return self.frames[0].identity

    def pixels(self) -> np.ndarray:
        """T x H x W x 3 array view of the clip."""
        return np.stack([f.pixels for f in self.frames])

    def with_pixels(self, pixels: np.ndarray, label: str | None = None, clip_id: str | None = None) -> "VideoClip":
        """New clip with the same frame metadata and replaced pixel content."""
        frames = tuple(
            replace(f, pixels=np.clip(p, 0.0, 1.0)) for f, p in zip(self.frames, pixels)
        )
        return VideoClip(
            frames=frames,
            fps=self.fps,
            clip_id=self.clip_id if clip_id is None else clip_id,
            label=self.label if label is None else label,
        )


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    identity: str
    label: str
    split: str
    distortion_history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValidationError(f"bad label {self.label!r} for clip {self.clip_id!r}")
        if self.split not in SPLITS:
            raise ValidationError(f"bad split {self.split!r} for clip {self.clip_id!r}")
        object.__setattr__(self, "distortion_history", tuple(self.distortion_history))

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "identity": self.identity,
            "label": self.label,
            "split": self.split,
            "distortion_history": [s.to_dict() for s in self.distortion_history],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            clip_id=d["clip_id"],
            identity=d["identity"],
            label=d["label"],
            split=d["split"],
            distortion_history=tuple(DistortionSpec.from_dict(s) for s in d.get("distortion_history", [])),
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Identity-grouped index of real/fake clips with split assignment."""

    entries: tuple
    seed: int = 0

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        self.validate()

    def validate(self):
        problems = []
        seen = set()
        for e in self.entries:
            if e.clip_id in seen:
                problems.append(f"duplicate clip_id {e.clip_id!r}")
            seen.add(e.clip_id)
        by_identity: dict[str, set] = {}
        for e in self.entries:
            if e.split in ("train", "val", "test"):
                by_identity.setdefault(e.identity, set()).add(e.split)
        for ident, splits in sorted(by_identity.items()):
            if len(splits) > 1:
                problems.append(f"identity {ident!r} appears in splits {sorted(splits)}")
        if problems:
            raise ValidationError("; ".join(problems))

    def subset(self, split: str | None = None) -> tuple:
        return tuple(e for e in self.entries if split is None or e.split == split)

    def identities(self, split: str | None = None) -> set:
        return {e.identity for e in self.subset(split)}

    def client_export(self) -> "DatasetManifest":
        """Manifest safe to ship to clients: hidden entries carry no label."""
        entries = tuple(
            replace(e, label="unknown") if e.split == "hidden" else e for e in self.entries
        )
        return DatasetManifest(entries=entries, seed=self.seed)


def write_manifest(manifest: DatasetManifest, path: str | os.PathLike):
    """Line-delimited JSON with a fixed field order; diff-able and byte-stable."""
    manifest.validate()
    lines = [json.dumps({"format": MANIFEST_FORMAT, "seed": manifest.seed}, separators=(",", ":"))]
    for e in manifest.entries:
        lines.append(json.dumps(e.to_dict(), separators=(",", ":")))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path: str | os.PathLike) -> DatasetManifest:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"empty manifest file {path}")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise ValidationError(f"unrecognized manifest header in {path}")
    entries = tuple(ManifestEntry.from_dict(json.loads(ln)) for ln in lines[1:])
    return DatasetManifest(entries=entries, seed=int(header.get("seed", 0)))


# ---------------------------------------------------------------------------
# Clip I/O


def _to_u8(pixels: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)


def _from_u8(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float32) / 255.0


def write_clip(clip: VideoClip, path: str | os.PathLike):
    """Write a clip as ``path/NNNNNN.png`` + ``meta.json`` (lossless)."""
    path = str(path)
    os.makedirs(path, exist_ok=True)
    meta = {
        "format": CLIP_META_FORMAT,
        "clip_id": clip.clip_id,
        "fps": clip.fps,
        "label": clip.label,
        "identity": clip.identity,
        "frame_indices": [f.frame_index for f in clip.frames],
        "landmarks": [
            None if f.landmarks is None else np.asarray(f.landmarks).tolist() for f in clip.frames
        ],
    }
    for i, f in enumerate(clip.frames):
        bgr = cv2.cvtColor(_to_u8(f.pixels), cv2.COLOR_RGB2BGR)
        if not cv2.imwrite(os.path.join(path, f"{i:06d}.png"), bgr):
            raise DecodeError(f"failed to write frame {i} of clip {clip.clip_id!r}")
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh)


def _load_clip_dir(path: str) -> VideoClip:
    meta_path = os.path.join(path, "meta.json")
    if not os.path.exists(meta_path):
        raise DecodeError(f"no meta.json in clip directory {path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    names = sorted(n for n in os.listdir(path) if n.endswith(".png"))
    frames = []
    lms = meta.get("landmarks") or [None] * len(names)
    indices = meta.get("frame_indices") or list(range(len(names)))
    for name, lm, idx in zip(names, lms, indices):
        bgr = cv2.imread(os.path.join(path, name), cv2.IMREAD_COLOR)
        if bgr is None:
            raise DecodeError(f"failed to decode {name} in {path}")
        frames.append(
            FaceFrame(
                pixels=_from_u8(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)),
                identity=meta.get("identity", ""),
                frame_index=int(idx),
                landmarks=None if lm is None else np.asarray(lm, dtype=np.float64),
            )
        )
    if len(frames) < 2:
        raise ArityError(f"clip at {path} has {len(frames)} frame(s); need at least 2")
    return VideoClip(
        frames=tuple(frames),
        fps=float(meta.get("fps", 25.0)),
        clip_id=meta.get("clip_id", os.path.basename(path.rstrip("/"))),
        label=meta.get("label", "unknown"),
    )


def _load_clip_file(path: str) -> VideoClip:
    cap = cv2.VideoCapture(path)
    if not cap.isOpened():
        raise DecodeError(f"cannot open video file {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 25.0
    frames = []
    i = 0
    while True:
        ok, bgr = cap.read()
        if not ok:
            break
        frames.append(
            FaceFrame(pixels=_from_u8(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)), frame_index=i)
        )
        i += 1
    cap.release()
    if len(frames) < 2:
        raise ArityError(f"video file {path} decoded to {len(frames)} frame(s); need at least 2")
    base = os.path.splitext(os.path.basename(path))[0]
    return VideoClip(frames=tuple(frames), fps=float(fps), clip_id=base)


def load_clip(path: str | os.PathLike) -> VideoClip:
    path = str(path)
    if not os.path.exists(path):
        raise DecodeError(f"no such clip: {path}")
    if os.path.isdir(path):
        return _load_clip_dir(path)
    return _load_clip_file(path)
