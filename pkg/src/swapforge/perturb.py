"""Real-world perturbation engine: seven distortion types at five intensity
levels, applied singly, at random, or as mixtures, with deterministic seeding.

The level parameter tables are published here and config-overridable; the
invariant the suite relies on is severity monotonicity per kind, not the
absolute values. Video compression uses a DCT-quantization approximation so
the pipeline stays self-contained and bit-deterministic; a real codec can be
plugged in behind the same interface.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DecodeError, ValidationError
from .media import DISTORTION_KINDS, DatasetManifest, DistortionSpec, ManifestEntry, VideoClip

__all__ = [
    "DistortionSpec",
    "PerturbPlan",
    "LEVEL_TABLES",
    "apply_distortion",
    "apply_plan",
    "random_plan",
    "build_variant",
    "derive_seed",
    "all_specs",
]

PLAN_MODES = ("single_level_random_type", "random_level_random_type", "mixture")
MAX_MIX = 4  # mixtures of up to four distortions

# level 1..5 parameter ladders (index level-1)
LEVEL_TABLES = {
    "color_saturation": [0.85, 0.70, 0.55, 0.40, 0.25],  # scale toward gray
    "color_contrast": [0.85, 0.70, 0.55, 0.40, 0.25],  # scale toward mean
    "gaussian_blur": [0.5, 1.0, 2.0, 3.0, 5.0],  # sigma px at 128x128
    "gaussian_noise": [0.02, 0.04, 0.06, 0.08, 0.12],  # std in unit range
    "jpeg_compression": [80, 65, 50, 35, 20],  # JPEG quality
    "video_compression": [23, 28, 33, 38, 43],  # constant-rate-factor style knob
    "block_wise": [2, 4, 6, 8, 10],  # number of corrupted 8x8 blocks
}


@dataclass(frozen=True)
class PerturbPlan:
    """Ordered distortion sequence plus the seed that reproduces it."""

    specs: tuple
    seed: int

    def __post_init__(self):
        specs = tuple(self.specs)
        if not 1 <= len(specs) <= MAX_MIX:
            raise ValidationError(f"plan length must be 1..{MAX_MIX}, got {len(specs)}")
        object.__setattr__(self, "specs", specs)


def derive_seed(global_seed: int, clip_id: str) -> int:
    """Stable per-clip seed so parallel application order never matters."""
    digest = hashlib.sha256(f"{global_seed}:{clip_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def all_specs():
    """All 35 (kind, level) combinations."""
    return [DistortionSpec(kind=k, level=lv) for k in DISTORTION_KINDS for lv in range(1, 6)]


# ---------------------------------------------------------------------------
# per-kind transforms; each maps (T,H,W,3 float array, level param, rng) -> array


def _luma(px):
    return px[..., 0] * 0.299 + px[..., 1] * 0.587 + px[..., 2] * 0.114


def _saturation(px, scale, rng):
    gray = _luma(px)[..., None]
    return gray + scale * (px - gray)


def _contrast(px, scale, rng):
    mean = px.mean(axis=(1, 2, 3), keepdims=True)
    return mean + scale * (px - mean)


def _gauss_blur(px, sigma128, rng):
    sigma = sigma128 * px.shape[2] / 128.0
    out = np.empty_like(px)
    for t in range(px.shape[0]):
        out[t] = cv2.GaussianBlur(px[t], (0, 0), sigmaX=sigma, sigmaY=sigma,
                                  borderType=cv2.BORDER_REFLECT)
    return out


def _gauss_noise(px, std, rng):
    return px + rng.normal(0.0, std, size=px.shape)


def _jpeg(px, quality, rng):
    out = np.empty_like(px)
    for t in range(px.shape[0]):
        u8 = np.clip(np.rint(px[t] * 255.0), 0, 255).astype(np.uint8)
        ok, buf = cv2.imencode(".jpg", cv2.cvtColor(u8, cv2.COLOR_RGB2BGR),
                               [cv2.IMWRITE_JPEG_QUALITY, int(quality)])
        if not ok:
            raise DecodeError("JPEG encoding failed")
        dec = cv2.cvtColor(cv2.imdecode(buf, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)
        out[t] = dec.astype(np.float64) / 255.0
    return out


def _video_compression(px, crf, rng):
    # DCT-quantization approximation of codec compression: the quantization
    # step grows geometrically with the rate-factor knob.
    step = 0.01 * 2.0 ** ((crf - 23) / 6.0)
    t_count, h, w, _ = px.shape
    bh, bw = h - h % 8, w - w % 8
    out = px.copy()
    for t in range(t_count):
        for c in range(3):
            plane = px[t, :bh, :bw, c].astype(np.float64)
            for by in range(0, bh, 8):
                for bx in range(0, bw, 8):
                    block = plane[by:by + 8, bx:bx + 8]
                    coeffs = cv2.dct(block)
                    coeffs = np.round(coeffs / step) * step
                    plane[by:by + 8, bx:bx + 8] = cv2.idct(coeffs)
            out[t, :bh, :bw, c] = plane
    return out


def _block_wise(px, n_blocks, rng):
    t_count, h, w, _ = px.shape
    out = px.copy()
    nby, nbx = max(1, h // 8), max(1, w // 8)
    for t in range(t_count):
        # draw the maximum block count once, use a prefix: level ladders nest,
        # which makes severity monotone by construction
        coords = rng.integers(0, nby * nbx, size=max(LEVEL_TABLES["block_wise"]))
        for idx in coords[: int(n_blocks)]:
            by, bx = divmod(int(idx), nbx)
            y0, x0 = by * 8, bx * 8
            block = out[t, y0:y0 + 8, x0:x0 + 8]
            block[...] = block.mean(axis=(0, 1), keepdims=True)
    return out


_TRANSFORMS = {
    "color_saturation": _saturation,
    "color_contrast": _contrast,
    "gaussian_blur": _gauss_blur,
    "gaussian_noise": _gauss_noise,
    "jpeg_compression": _jpeg,
    "video_compression": _video_compression,
    "block_wise": _block_wise,
}


def apply_distortion(clip: VideoClip, spec: DistortionSpec, seed: int) -> VideoClip:
    """Apply one distortion; deterministic given (clip, spec, seed)."""
    if spec.kind not in _TRANSFORMS:
        raise ValidationError(f"unknown distortion kind {spec.kind!r}")
    param = LEVEL_TABLES[spec.kind][spec.level - 1]
    # the rng seed deliberately excludes the level: levels of one kind then
    # share their random draws (noise pattern, corrupted block prefix), which
    # makes severity monotone in level by construction
    rng = np.random.default_rng(derive_seed(seed, spec.kind))
    px = clip.pixels().astype(np.float64)
    out = _TRANSFORMS[spec.kind](px, param, rng)
    return clip.with_pixels(np.clip(out, 0.0, 1.0))


def apply_plan(clip: VideoClip, plan: PerturbPlan) -> VideoClip:
    out = clip
    for spec in plan.specs:
        out = apply_distortion(out, spec, plan.seed)
    return out


def random_plan(mode: str, mix_count: int = 3, seed: int = 0) -> PerturbPlan:
    """std/sing draws level 5 with a random kind; std/rand draws both
    uniformly; mixture draws mix_count independent (kind, level) pairs."""
    if mode not in PLAN_MODES:
        raise ValidationError(f"mode must be one of {PLAN_MODES}, got {mode!r}")
    rng = np.random.default_rng(seed)
    if mode == "single_level_random_type":
        specs = (DistortionSpec(kind=DISTORTION_KINDS[int(rng.integers(0, 7))], level=5),)
    elif mode == "random_level_random_type":
        specs = (
            DistortionSpec(
                kind=DISTORTION_KINDS[int(rng.integers(0, 7))],
                level=int(rng.integers(1, 6)),
            ),
        )
    else:
        if not 2 <= mix_count <= MAX_MIX:
            raise ValidationError(f"mix_count must be in 2..{MAX_MIX}, got {mix_count}")
        specs = tuple(
            DistortionSpec(
                kind=DISTORTION_KINDS[int(rng.integers(0, 7))],
                level=int(rng.integers(1, 6)),
            )
            for _ in range(mix_count)
        )
    return PerturbPlan(specs=specs, seed=seed)


VARIANT_MODES = ("sing", "rand", "mix")


def build_variant(
    manifest: DatasetManifest,
    mode: str,
    seed: int,
    load_clip_fn,
    write_clip_fn=None,
) -> DatasetManifest:
    """New manifest of perturbed clips with full distortion history.

    ``sing`` expands each entry to five (levels 1..5, random kind per
    entry/level); ``rand`` and ``mix`` emit one entry per input. Split
    assignments are inherited unchanged. ``load_clip_fn(clip_id)`` fetches the
    source clip; ``write_clip_fn(clip)`` persists outputs when given.
    """
    if mode not in VARIANT_MODES:
        raise ValidationError(f"mode must be one of {VARIANT_MODES}, got {mode!r}")
    entries = []
    for e in manifest.entries:
        try:
            clip = load_clip_fn(e.clip_id)
        except Exception as exc:
            raise DecodeError(f"cannot load clip {e.clip_id!r}: {exc}") from exc
        clip_seed = derive_seed(seed, e.clip_id)
        if mode == "sing":
            rng = np.random.default_rng(clip_seed)
            for level in range(1, 6):
                spec = DistortionSpec(kind=DISTORTION_KINDS[int(rng.integers(0, 7))],
                                      level=level)
                plan = PerturbPlan(specs=(spec,), seed=clip_seed)
                out_id = f"{e.clip_id}__sing_l{level}"
                out = apply_plan(clip, plan)
                out = out.with_pixels(out.pixels(), clip_id=out_id)
                if write_clip_fn is not None:
                    write_clip_fn(out)
                entries.append(
                    ManifestEntry(
                        clip_id=out_id,
                        identity=e.identity,
                        label=e.label,
                        split=e.split,
                        distortion_history=e.distortion_history + plan.specs,
                    )
                )
        else:
            plan_mode = "random_level_random_type" if mode == "rand" else "mixture"
            plan = random_plan(plan_mode, mix_count=3, seed=clip_seed)
            out_id = f"{e.clip_id}__{mode}"
            out = apply_plan(clip, plan)
            out = out.with_pixels(out.pixels(), clip_id=out_id)
            if write_clip_fn is not None:
                write_clip_fn(out)
            entries.append(
                ManifestEntry(
                    clip_id=out_id,
                    identity=e.identity,
                    label=e.label,
                    split=e.split,
                    distortion_history=e.distortion_history + plan.specs,
                )
            )
    return DatasetManifest(entries=tuple(entries), seed=seed)
