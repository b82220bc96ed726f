import json
import os

import numpy as np
import pytest

from swapforge.errors import ArityError, DecodeError, ShapeMismatchError, ValidationError
from swapforge.media import (
    DISTORTION_KINDS,
    DatasetManifest,
    DistortionSpec,
    FaceFrame,
    ManifestEntry,
    Mask,
    VideoClip,
    load_clip,
    read_manifest,
    write_clip,
    write_manifest,
)
from .conftest import random_clip, random_frame


def test_face_frame_validation():
    rng = np.random.default_rng(0)
    f = random_frame(rng, size=16)
    assert f.height == 16 and f.width == 16
    assert not f.pixels.flags.writeable
    with pytest.raises(ValidationError):
        FaceFrame(pixels=np.zeros((4, 4, 3)))  # too small
    with pytest.raises(ValidationError):
        FaceFrame(pixels=np.zeros((16, 16, 4)))
    with pytest.raises(ValidationError):
        FaceFrame(pixels=np.full((16, 16, 3), 1.5))
    with pytest.raises(ValidationError):
        FaceFrame(pixels=np.zeros((16, 16, 3)), landmarks=np.array([[20.0, 3.0]]))
    with pytest.raises(ValidationError):
        FaceFrame(pixels=np.zeros((16, 16, 3)), frame_index=-1)


def test_mask_validation():
    Mask(values=np.eye(8), kind="binary")
    Mask(values=np.full((8, 8), 0.5), kind="blurred")
    with pytest.raises(ValidationError):
        Mask(values=np.full((8, 8), 0.5), kind="binary")
    with pytest.raises(ValidationError):
        Mask(values=np.full((8, 8), 2.0), kind="blurred")
    with pytest.raises(ValidationError):
        Mask(values=np.zeros((8, 8, 1)))


def test_clip_invariants():
    rng = np.random.default_rng(1)
    clip = random_clip(rng, n_frames=3)
    assert len(clip) == 3
    assert clip.pixels().shape == (3, 16, 16, 3)
    with pytest.raises(ArityError):
        VideoClip(frames=(random_frame(rng),), fps=25.0, clip_id="x")
    f0 = random_frame(rng, frame_index=1)
    f1 = random_frame(rng, frame_index=1)
    with pytest.raises(ValidationError):
        VideoClip(frames=(f0, f1), fps=25.0, clip_id="x")  # non-increasing index
    g = random_frame(rng, size=24, frame_index=2)
    with pytest.raises(ShapeMismatchError):
        VideoClip(frames=(f0, g), fps=25.0, clip_id="x")
    with pytest.raises(ValidationError):
        VideoClip(frames=(f0, random_frame(rng, frame_index=2)), fps=25.0,
                  clip_id="x", label="bogus")


def test_with_pixels_keeps_metadata():
    rng = np.random.default_rng(2)
    clip = random_clip(rng, n_frames=3, clip_id="orig")
    out = clip.with_pixels(clip.pixels() * 0.5, label="fake", clip_id="new")
    assert out.clip_id == "new" and out.label == "fake"
    assert [f.frame_index for f in out.frames] == [f.frame_index for f in clip.frames]
    assert np.allclose(out.pixels(), clip.pixels() * 0.5)


def test_clip_roundtrip_lossless_within_8bit(tmp_path, one_clip):
    path = tmp_path / "c0"
    write_clip(one_clip, path)
    back = load_clip(path)
    assert back.clip_id == one_clip.clip_id
    assert back.label == one_clip.label
    assert back.identity == one_clip.identity
    assert len(back) == len(one_clip)
    # PNG is lossless; only the 8-bit quantization remains
    err = np.abs(back.pixels() - one_clip.pixels()).max()
    assert err <= 0.5 / 255.0 + 1e-12
    # landmarks survive the container exactly
    for fa, fb in zip(one_clip.frames, back.frames):
        assert np.array_equal(np.asarray(fa.landmarks), np.asarray(fb.landmarks))


def test_clip_roundtrip_bit_exact_on_quantized_pixels(tmp_path):
    rng = np.random.default_rng(3)
    q = np.rint(rng.uniform(0, 1, (3, 16, 16, 3)) * 255.0) / 255.0
    clip = random_clip(rng, n_frames=3).with_pixels(q)
    write_clip(clip, tmp_path / "c")
    back = load_clip(tmp_path / "c")
    assert np.allclose(back.pixels(), clip.pixels(), atol=1e-7)


def test_load_clip_errors(tmp_path):
    with pytest.raises(DecodeError):
        load_clip(tmp_path / "missing")
    bad = tmp_path / "bad"
    os.makedirs(bad)
    with pytest.raises(DecodeError):
        load_clip(bad)  # no meta.json
    single = tmp_path / "single"
    os.makedirs(single)
    with open(single / "meta.json", "w") as fh:
        json.dump({"format": "swapforge-clip.v1", "clip_id": "s", "fps": 25.0,
                   "label": "real", "identity": "", "frame_indices": [0],
                   "landmarks": [None]}, fh)
    import cv2
    cv2.imwrite(str(single / "000000.png"), np.zeros((16, 16, 3), dtype=np.uint8))
    with pytest.raises(ArityError):
        load_clip(single)


def test_distortion_spec_validation():
    for kind in DISTORTION_KINDS:
        DistortionSpec(kind=kind, level=3)
    with pytest.raises(ValidationError):
        DistortionSpec(kind="sepia", level=1)
    with pytest.raises(ValidationError):
        DistortionSpec(kind="gaussian_blur", level=0)
    with pytest.raises(ValidationError):
        DistortionSpec(kind="gaussian_blur", level=6)


def _entries(n, split="train", prefix="c", identity_prefix="p"):
    return [
        ManifestEntry(clip_id=f"{prefix}{i}", identity=f"{identity_prefix}{i}",
                      label="real", split=split)
        for i in range(n)
    ]


def test_manifest_rejects_duplicates_and_split_leaks():
    e = _entries(3)
    with pytest.raises(ValidationError):
        DatasetManifest(entries=tuple(e + [e[0]]))
    leaky = [
        ManifestEntry(clip_id="a", identity="p", label="real", split="train"),
        ManifestEntry(clip_id="b", identity="p", label="real", split="test"),
    ]
    with pytest.raises(ValidationError):
        DatasetManifest(entries=tuple(leaky))
    # the same identity may appear in hidden alongside a core split
    DatasetManifest(entries=(
        ManifestEntry(clip_id="a", identity="p", label="real", split="train"),
        ManifestEntry(clip_id="b", identity="p", label="fake", split="hidden"),
    ))


def test_manifest_roundtrip_byte_stable(tmp_path):
    rng = np.random.default_rng(4)
    entries = []
    for i in range(100):
        hist = tuple(
            DistortionSpec(kind=DISTORTION_KINDS[int(rng.integers(0, 7))],
                           level=int(rng.integers(1, 6)))
            for _ in range(int(rng.integers(0, 3)))
        )
        entries.append(ManifestEntry(
            clip_id=f"c{i}", identity=f"p{i}",
            label=("real", "fake")[int(rng.integers(0, 2))],
            split=("train", "val", "test", "hidden")[int(rng.integers(0, 4))],
            distortion_history=hist,
        ))
    m = DatasetManifest(entries=tuple(entries), seed=42)
    p1, p2 = tmp_path / "m1.jsonl", tmp_path / "m2.jsonl"
    write_manifest(m, p1)
    back = read_manifest(p1)
    assert back == m
    write_manifest(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_read_errors(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with pytest.raises(ValidationError):
        read_manifest(p)
    p2 = tmp_path / "badheader.jsonl"
    p2.write_text('{"format":"something-else"}\n')
    with pytest.raises(ValidationError):
        read_manifest(p2)


def test_client_export_strips_hidden_labels():
    m = DatasetManifest(entries=(
        ManifestEntry(clip_id="a", identity="p1", label="real", split="train"),
        ManifestEntry(clip_id="h", identity="p2", label="fake", split="hidden"),
    ))
    exported = m.client_export()
    by_id = {e.clip_id: e for e in exported.entries}
    assert by_id["a"].label == "real"
    assert by_id["h"].label == "unknown"
