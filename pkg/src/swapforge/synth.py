"""Procedural cartoon-face generator with exact known landmarks.

Stands in for collected source footage at desk scale: every render is a pure
deterministic function of its parameters, so tests can rely on bit-identical
output. Identity parameters control colors and proportions, pose shifts the
features horizontally, expression parameters move mouth and brows, and the
light direction shades the head.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError
from .media import FaceFrame, VideoClip

LANDMARK_NAMES = (
    "face_left", "face_right", "chin", "forehead",
    "eye_left", "eye_right", "nose_tip",
    "mouth_left", "mouth_right", "mouth_center",
    "brow_left", "brow_right", "face_center",
)
LANDMARK_COUNT = len(LANDMARK_NAMES)


@dataclass(frozen=True)
class IdentityParams:
    skin: tuple = (0.87, 0.72, 0.60)
    hair: tuple = (0.25, 0.15, 0.08)
    eye_color: tuple = (0.25, 0.40, 0.60)
    face_width: float = 0.36  # half-axes as fraction of image size
    face_height: float = 0.44
    eye_spread: float = 0.16
    eye_size: float = 0.05
    mouth_width: float = 0.14

    @classmethod
    def from_seed(cls, seed: int) -> "IdentityParams":
        rng = np.random.default_rng(seed)
        return cls(
            skin=tuple(0.45 + 0.5 * rng.random(3)),
            hair=tuple(0.05 + 0.45 * rng.random(3)),
            eye_color=tuple(0.2 + 0.6 * rng.random(3)),
            face_width=float(0.30 + 0.10 * rng.random()),
            face_height=float(0.38 + 0.08 * rng.random()),
            eye_spread=float(0.13 + 0.05 * rng.random()),
            eye_size=float(0.04 + 0.02 * rng.random()),
            mouth_width=float(0.11 + 0.06 * rng.random()),
        )


@dataclass(frozen=True)
class ExpressionParams:
    smile: float = 0.0  # -1 frown .. +1 smile
    mouth_open: float = 0.2  # 0 closed .. 1 wide open
    brow_raise: float = 0.0  # -1 lowered .. +1 raised


def synth_face(
    identity: IdentityParams,
    pose: float = 0.0,
    expression: ExpressionParams | None = None,
    light_dir: tuple = (0.0, 0.0),
    size: int = 64,
    identity_tag: str = "synth",
    frame_index: int = 0,
) -> FaceFrame:
    """Render one parametric face; pose is yaw in degrees, in [-90, +90]."""
    if not -90.0 <= pose <= 90.0:
        raise DomainError(f"pose must be in [-90, 90] degrees, got {pose}")
    exp = expression or ExpressionParams()
    s = float(size)
    cx = (s - 1.0) / 2.0
    cy = (s - 1.0) / 2.0
    yaw = math.sin(math.radians(pose))

    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.empty((size, size, 3), dtype=np.float64)
    bg = 0.12 + 0.05 * (xs + ys) / (2 * s)
    for c in range(3):
        img[..., c] = bg

    # head ellipse, narrowed as the head turns
    fw = identity.face_width * s * (1.0 - 0.25 * abs(yaw))
    fh = identity.face_height * s
    head = ((xs - cx) / fw) ** 2 + ((ys - cy) / fh) ** 2 <= 1.0
    lx, ly = light_dir
    norm = math.hypot(lx, ly) or 1.0
    shade = 1.0 + 0.25 * ((xs - cx) / fw * (lx / norm) + (ys - cy) / fh * (ly / norm))
    shade = np.clip(shade, 0.6, 1.4)
    for c in range(3):
        img[..., c] = np.where(head, np.clip(identity.skin[c] * shade, 0, 1), img[..., c])

    # hair cap
    hair = head & (ys < cy - 0.55 * fh)
    for c in range(3):
        img[..., c] = np.where(hair, identity.hair[c], img[..., c])

    shift = yaw * 0.5 * fw  # feature shift with pose
    eye_y = cy - 0.18 * fh
    eye_dx = identity.eye_spread * s * (1.0 - 0.3 * abs(yaw))
    er = identity.eye_size * s

    def disk(x0, y0, r):
        return (xs - x0) ** 2 + (ys - y0) ** 2 <= r * r

    for side in (-1.0, 1.0):
        ex = cx + side * eye_dx + shift
        white = disk(ex, eye_y, er)
        pupil = disk(ex + 0.3 * er * yaw, eye_y, 0.45 * er)
        for c in range(3):
            img[..., c] = np.where(white, 0.95, img[..., c])
            img[..., c] = np.where(pupil, identity.eye_color[c], img[..., c])
        brow_y = eye_y - er * (1.8 + 0.8 * exp.brow_raise)
        brow = (np.abs(ys - brow_y) <= 0.06 * er * s / 16 + 0.8) & (np.abs(xs - ex) <= 1.2 * er)
        for c in range(3):
            img[..., c] = np.where(brow, identity.hair[c], img[..., c])

    # nose
    nose_y = cy + 0.08 * fh
    nose = (np.abs(xs - (cx + shift)) <= 0.6) & (ys >= eye_y) & (ys <= nose_y)
    for c in range(3):
        img[..., c] = np.where(nose, np.clip(identity.skin[c] * 0.7, 0, 1), img[..., c])

    # mouth: ellipse whose height follows mouth_open, center follows smile
    mw = identity.mouth_width * s * (1.0 - 0.3 * abs(yaw))
    mouth_y = cy + 0.42 * fh - 0.02 * s * exp.smile
    mh = (0.15 + 0.5 * exp.mouth_open) * 0.06 * s
    mouth = ((xs - (cx + shift)) / mw) ** 2 + ((ys - mouth_y) / max(mh, 0.8)) ** 2 <= 1.0
    for c in range(3):
        img[..., c] = np.where(mouth, (0.55, 0.15, 0.18)[c], img[..., c])

    def clampxy(x, y):
        return (min(max(x, 0.0), s - 1.0), min(max(y, 0.0), s - 1.0))

    lm = np.array(
        [
            clampxy(cx - fw + shift * 0.2, cy),
            clampxy(cx + fw + shift * 0.2, cy),
            clampxy(cx + shift, cy + fh),
            clampxy(cx + shift, cy - fh),
            clampxy(cx - eye_dx + shift, eye_y),
            clampxy(cx + eye_dx + shift, eye_y),
            clampxy(cx + shift, nose_y),
            clampxy(cx - mw + shift, mouth_y),
            clampxy(cx + mw + shift, mouth_y),
            clampxy(cx + shift, mouth_y),
            clampxy(cx - eye_dx + shift, eye_y - 2.0 * er),
            clampxy(cx + eye_dx + shift, eye_y - 2.0 * er),
            clampxy(cx + shift, cy),
        ],
        dtype=np.float64,
    )
    return FaceFrame(
        pixels=np.clip(img, 0.0, 1.0),
        identity=identity_tag,
        frame_index=frame_index,
        landmarks=lm,
    )


def synth_clip(
    identity: IdentityParams,
    clip_id: str,
    identity_tag: str,
    n_frames: int = 16,
    fps: float = 25.0,
    size: int = 64,
    pose_amplitude: float = 25.0,
    seed: int = 0,
    label: str = "real",
) -> VideoClip:
    """Clip with smooth pose/expression motion; deterministic per arguments."""
    rng = np.random.default_rng(seed)
    phase = 2 * math.pi * rng.random()
    pose0 = float(rng.uniform(-15, 15))
    smile0 = float(rng.uniform(-0.4, 0.4))
    light = (float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)))
    frames = []
    for t in range(n_frames):
        ang = 2 * math.pi * t / max(n_frames, 2) + phase
        pose = float(np.clip(pose0 + pose_amplitude * math.sin(ang), -90, 90))
        exp = ExpressionParams(
            smile=float(np.clip(smile0 + 0.5 * math.sin(2 * ang), -1, 1)),
            mouth_open=float(0.3 + 0.25 * (1 + math.cos(ang))),
        )
        frames.append(
            synth_face(identity, pose=pose, expression=exp, light_dir=light,
                       size=size, identity_tag=identity_tag, frame_index=t)
        )
    return VideoClip(frames=tuple(frames), fps=fps, clip_id=clip_id, label=label)


def synth_identities(n: int, seed: int = 0) -> dict:
    """n distinct identities, keyed id_000, id_001, ..."""
    return {f"id_{i:03d}": IdentityParams.from_seed(seed * 10_007 + i) for i in range(n)}


def synth_corpus(
    n_identities: int = 2,
    clips_per_identity: int = 2,
    n_frames: int = 16,
    size: int = 64,
    seed: int = 0,
    label: str = "real",
) -> list:
    """Flat list of clips across identities for training and tests."""
    clips = []
    for i, (tag, ident) in enumerate(sorted(synth_identities(n_identities, seed).items())):
        for j in range(clips_per_identity):
            clips.append(
                synth_clip(
                    ident,
                    clip_id=f"{tag}_clip{j}",
                    identity_tag=tag,
                    n_frames=n_frames,
                    size=size,
                    seed=seed * 1_000_003 + i * 101 + j,
                    label=label,
                )
            )
    return clips
