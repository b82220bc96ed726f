import numpy as np
import pytest

from swapforge.errors import DecodeError, ValidationError
from swapforge.media import (
    DISTORTION_KINDS,
    DatasetManifest,
    DistortionSpec,
    ManifestEntry,
)
from swapforge.perturb import (
    LEVEL_TABLES,
    PerturbPlan,
    all_specs,
    apply_distortion,
    apply_plan,
    build_variant,
    derive_seed,
    random_plan,
)
from .conftest import random_clip


@pytest.fixture(scope="module")
def clip():
    return random_clip(np.random.default_rng(0), n_frames=3, size=32, clip_id="base")


def test_all_specs_is_the_full_grid():
    specs = all_specs()
    assert len(specs) == 35
    assert len(set(specs)) == 35
    assert {s.kind for s in specs} == set(DISTORTION_KINDS)
    assert {s.level for s in specs} == {1, 2, 3, 4, 5}


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert 0 <= derive_seed(123, "x") < 2 ** 63


def test_apply_distortion_bit_deterministic(clip):
    for kind in DISTORTION_KINDS:
        spec = DistortionSpec(kind=kind, level=3)
        a = apply_distortion(clip, spec, seed=7)
        b = apply_distortion(clip, spec, seed=7)
        assert np.array_equal(a.pixels(), b.pixels()), kind


def test_saturation_moves_toward_luma():
    rng = np.random.default_rng(1)
    clip = random_clip(rng, n_frames=2, size=32)
    px = clip.pixels()
    luma = px[..., 0] * 0.299 + px[..., 1] * 0.587 + px[..., 2] * 0.114
    out = apply_distortion(clip, DistortionSpec(kind="color_saturation", level=5), 0)
    spread_before = np.abs(px - luma[..., None]).mean()
    spread_after = np.abs(out.pixels() - luma[..., None]).mean()
    assert spread_after < spread_before
    assert spread_after == pytest.approx(0.25 * spread_before, rel=1e-5)
    # an already-gray clip is a fixed point
    gray = clip.with_pixels(np.repeat(luma[..., None], 3, axis=3))
    out_gray = apply_distortion(gray, DistortionSpec(kind="color_saturation", level=5), 0)
    assert np.allclose(out_gray.pixels(), gray.pixels(), atol=1e-7)


def test_contrast_preserves_global_mean():
    rng = np.random.default_rng(2)
    clip = random_clip(rng, n_frames=2, size=32, identity="a")
    clip = clip.with_pixels(0.3 + 0.4 * clip.pixels())  # keep away from clipping
    out = apply_distortion(clip, DistortionSpec(kind="color_contrast", level=4), 0)
    for t in range(2):
        assert out.pixels()[t].mean() == pytest.approx(clip.pixels()[t].mean(), abs=1e-9)
    assert out.pixels().std() < clip.pixels().std()


def test_blur_fixes_constant_image():
    const = random_clip(np.random.default_rng(3), n_frames=2, size=32).with_pixels(
        np.full((2, 32, 32, 3), 0.4))
    out = apply_distortion(const, DistortionSpec(kind="gaussian_blur", level=5), 0)
    assert np.allclose(out.pixels(), 0.4, atol=1e-7)


def test_noise_std_matches_table():
    const = random_clip(np.random.default_rng(4), n_frames=2, size=128).with_pixels(
        np.full((2, 128, 128, 3), 0.5))
    out = apply_distortion(const, DistortionSpec(kind="gaussian_noise", level=3), 0)
    resid = out.pixels() - 0.5
    assert resid.std() == pytest.approx(LEVEL_TABLES["gaussian_noise"][2], rel=0.05)


def test_jpeg_nearly_preserves_constant_image():
    const = random_clip(np.random.default_rng(5), n_frames=2, size=32).with_pixels(
        np.full((2, 32, 32, 3), 0.5))
    out = apply_distortion(const, DistortionSpec(kind="jpeg_compression", level=5), 0)
    assert np.abs(out.pixels() - 0.5).max() <= 2.5 / 255.0


def test_video_compression_quantizes(clip):
    out = apply_distortion(clip, DistortionSpec(kind="video_compression", level=5), 0)
    assert not np.array_equal(out.pixels(), clip.pixels())
    assert out.pixels().min() >= 0.0 and out.pixels().max() <= 1.0
    mild = apply_distortion(clip, DistortionSpec(kind="video_compression", level=1), 0)
    err_mild = np.abs(mild.pixels() - clip.pixels()).mean()
    err_hard = np.abs(out.pixels() - clip.pixels()).mean()
    assert err_mild < err_hard


def test_block_wise_levels_nest(clip):
    changed_prev = None
    for level in range(1, 6):
        out = apply_distortion(clip, DistortionSpec(kind="block_wise", level=level), 11)
        changed = np.any(out.pixels() != clip.pixels(), axis=3)
        n_blocks = LEVEL_TABLES["block_wise"][level - 1]
        # no more than n 8x8 blocks touched per frame
        for t in range(len(clip)):
            blocks = changed[t].reshape(4, 8, 4, 8).any(axis=(1, 3))
            assert blocks.sum() <= n_blocks
        if changed_prev is not None:
            assert np.all(changed_prev <= changed)  # strict prefix nesting
        changed_prev = changed


def test_plan_validation():
    with pytest.raises(ValidationError):
        PerturbPlan(specs=(), seed=0)
    with pytest.raises(ValidationError):
        PerturbPlan(specs=tuple(all_specs()[:5]), seed=0)
    with pytest.raises(ValidationError):
        random_plan("nonsense")
    with pytest.raises(ValidationError):
        random_plan("mixture", mix_count=1)
    with pytest.raises(ValidationError):
        random_plan("mixture", mix_count=5)


def test_single_level_mode_pins_level_five():
    kinds = set()
    for seed in range(300):
        plan = random_plan("single_level_random_type", seed=seed)
        assert len(plan.specs) == 1
        assert plan.specs[0].level == 5
        kinds.add(plan.specs[0].kind)
    assert kinds == set(DISTORTION_KINDS)


def test_random_mode_distributions_roughly_uniform():
    kind_counts = {k: 0 for k in DISTORTION_KINDS}
    level_counts = {lv: 0 for lv in range(1, 6)}
    n = 3500
    for seed in range(n):
        plan = random_plan("random_level_random_type", seed=seed)
        kind_counts[plan.specs[0].kind] += 1
        level_counts[plan.specs[0].level] += 1
    # chi-square against uniform; 99.9% critical values (df 6 and 4)
    chi_kind = sum((c - n / 7) ** 2 / (n / 7) for c in kind_counts.values())
    chi_level = sum((c - n / 5) ** 2 / (n / 5) for c in level_counts.values())
    assert chi_kind < 22.46
    assert chi_level < 18.47


def test_mixture_mode_length_and_reproducibility():
    plan = random_plan("mixture", mix_count=3, seed=9)
    assert len(plan.specs) == 3
    assert plan == random_plan("mixture", mix_count=3, seed=9)


def test_apply_plan_equals_sequential_application(clip):
    plan = PerturbPlan(specs=(
        DistortionSpec(kind="gaussian_noise", level=2),
        DistortionSpec(kind="jpeg_compression", level=3),
    ), seed=21)
    combined = apply_plan(clip, plan)
    step = apply_distortion(clip, plan.specs[0], plan.seed)
    step = apply_distortion(step, plan.specs[1], plan.seed)
    assert np.array_equal(combined.pixels(), step.pixels())


# ---------------------------------------------------------------------------
# dataset variants


def _variant_fixture():
    rng = np.random.default_rng(6)
    clips = {
        "c_real": random_clip(rng, n_frames=2, size=16, identity="p0", clip_id="c_real"),
        "c_fake": random_clip(rng, n_frames=2, size=16, identity="p1",
                              clip_id="c_fake", label="fake"),
    }
    manifest = DatasetManifest(entries=(
        ManifestEntry(clip_id="c_real", identity="p0", label="real", split="train"),
        ManifestEntry(clip_id="c_fake", identity="p1", label="fake", split="test"),
    ))
    return manifest, clips


def test_build_variant_sing_expands_five_fold():
    manifest, clips = _variant_fixture()
    out = build_variant(manifest, "sing", seed=1, load_clip_fn=clips.__getitem__)
    assert len(out.entries) == 5 * len(manifest.entries)
    for e in out.entries:
        assert len(e.distortion_history) == 1
    levels = sorted(e.distortion_history[0].level for e in out.entries
                    if e.clip_id.startswith("c_real"))
    assert levels == [1, 2, 3, 4, 5]
    assert {e.split for e in out.entries} == {"train", "test"}


def test_build_variant_rand_and_mix():
    manifest, clips = _variant_fixture()
    rand = build_variant(manifest, "rand", seed=1, load_clip_fn=clips.__getitem__)
    assert [e.clip_id for e in rand.entries] == ["c_real__rand", "c_fake__rand"]
    assert all(len(e.distortion_history) == 1 for e in rand.entries)
    mix = build_variant(manifest, "mix", seed=1, load_clip_fn=clips.__getitem__)
    assert [e.clip_id for e in mix.entries] == ["c_real__mix", "c_fake__mix"]
    assert all(len(e.distortion_history) == 3 for e in mix.entries)
    # labels and splits inherited
    by_id = {e.clip_id: e for e in mix.entries}
    assert by_id["c_fake__mix"].label == "fake"
    assert by_id["c_fake__mix"].split == "test"


def test_build_variant_writes_clips_and_is_deterministic():
    manifest, clips = _variant_fixture()
    written_a, written_b = {}, {}
    a = build_variant(manifest, "rand", seed=4, load_clip_fn=clips.__getitem__,
                      write_clip_fn=lambda c: written_a.__setitem__(c.clip_id, c.pixels()))
    b = build_variant(manifest, "rand", seed=4, load_clip_fn=clips.__getitem__,
                      write_clip_fn=lambda c: written_b.__setitem__(c.clip_id, c.pixels()))
    assert a == b
    assert set(written_a) == {"c_real__rand", "c_fake__rand"}
    for cid in written_a:
        assert np.array_equal(written_a[cid], written_b[cid])


def test_build_variant_errors():
    manifest, _ = _variant_fixture()
    with pytest.raises(ValidationError):
        build_variant(manifest, "nope", seed=0, load_clip_fn=lambda cid: None)

    def broken(cid):
        raise OSError("disk on fire")

    with pytest.raises(DecodeError):
        build_variant(manifest, "rand", seed=0, load_clip_fn=broken)
