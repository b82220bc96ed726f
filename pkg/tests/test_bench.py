import numpy as np
import pytest

from swapforge.bench import (
    ConstantDetector,
    Detector,
    EvalReport,
    HiddenSession,
    HiddenVault,
    OracleDetector,
    RatingRecord,
    ReferenceDetector,
    ScenarioConfig,
    aggregate_ratings,
    clip_score,
    curate_hidden,
    evaluate,
    fid,
    hidden_submit,
    is_score,
    rerender_error,
    run_scenario,
    split_by_identity,
)
from swapforge.errors import (
    ArityError,
    DetectorError,
    InsufficientRatingsError,
    LeakageError,
    ShapeMismatchError,
    SubmissionError,
    ValidationError,
)
from swapforge.media import DatasetManifest, ManifestEntry
from .conftest import random_clip


# ---------------------------------------------------------------------------
# splits


def test_split_100_identities():
    idents = [f"p{i:03d}" for i in range(100)]
    assignment = split_by_identity(idents, seed=0)
    assert set(assignment) == set(idents)
    counts = {s: 0 for s in ("train", "val", "test")}
    for s in assignment.values():
        counts[s] += 1
    assert (counts["train"], counts["val"], counts["test"]) == (70, 10, 20)


def test_split_small_and_remainders():
    assignment = split_by_identity([f"p{i}" for i in range(10)], seed=1)
    counts = [list(assignment.values()).count(s) for s in ("train", "val", "test")]
    assert counts == [7, 1, 2]
    # 13 identities: exact shares 9.1 / 1.3 / 2.6 -> largest remainder gives test the extra
    assignment = split_by_identity([f"p{i}" for i in range(13)], seed=1)
    counts = [list(assignment.values()).count(s) for s in ("train", "val", "test")]
    assert counts == [9, 1, 3]
    assert sum(counts) == 13


def test_split_deterministic_and_seed_sensitive():
    idents = [f"p{i}" for i in range(30)]
    assert split_by_identity(idents, seed=5) == split_by_identity(idents, seed=5)
    assert split_by_identity(idents, seed=5) != split_by_identity(idents, seed=6)


def test_split_too_few_identities():
    with pytest.raises(ArityError):
        split_by_identity(["a", "b"])


# ---------------------------------------------------------------------------
# detectors and evaluation


def _labeled_clips(n_real=4, n_fake=4, seed=0):
    rng = np.random.default_rng(seed)
    clips, entries = {}, []
    for i in range(n_real):
        cid = f"real{i}"
        base = rng.uniform(0.3, 0.7, (16, 16, 3))
        px = np.stack([np.clip(base + 0.001 * t, 0, 1) for t in range(4)])
        clips[cid] = random_clip(rng, n_frames=4, size=16, identity=f"pr{i}",
                                 clip_id=cid).with_pixels(px)
    for i in range(n_fake):
        cid = f"fake{i}"
        px = rng.uniform(0, 1, (4, 16, 16, 3))  # frame-incoherent
        clips[cid] = random_clip(rng, n_frames=4, size=16, identity=f"pf{i}",
                                 clip_id=cid, label="fake").with_pixels(px, label="fake")
    for cid, clip in clips.items():
        entries.append(ManifestEntry(clip_id=cid, identity=clip.identity,
                                     label=clip.label, split="test"))
    return DatasetManifest(entries=tuple(entries)), clips


def test_oracle_and_anti_oracle():
    manifest, clips = _labeled_clips()
    labels = {e.clip_id: e.label for e in manifest.entries}
    assert evaluate(OracleDetector(labels), manifest, clips).accuracy == 1.0
    assert evaluate(OracleDetector(labels, invert=True), manifest, clips).accuracy == 0.0


def test_image_level_aggregation_is_exact_mean():
    rng = np.random.default_rng(1)
    clip = random_clip(rng, n_frames=5, size=16)
    scores = rng.uniform(0, 1, 5)

    class FrameScorer(Detector):
        granularity = "image_level"

        def score_frames(self, c):
            return scores

    assert clip_score(FrameScorer(), clip) == float(scores.mean())


def test_clip_score_rejects_invalid_values():
    rng = np.random.default_rng(2)
    clip = random_clip(rng, n_frames=3, size=16)
    with pytest.raises(DetectorError):
        clip_score(ConstantDetector(1.5), clip)
    with pytest.raises(DetectorError):
        clip_score(ConstantDetector(float("nan")), clip)


def test_evaluate_threshold_semantics():
    manifest, clips = _labeled_clips(n_real=1, n_fake=1)
    # score exactly at the threshold counts as real (strict >)
    report = evaluate(ConstantDetector(0.5), manifest, clips, threshold=0.5)
    per = {cid: pred for cid, _, pred, _ in report.per_clip}
    assert per["real0"] == "real" and per["fake0"] == "real"
    assert report.accuracy == 0.5


def test_reference_detector_separates_easy_classes():
    manifest, clips = _labeled_clips(n_real=8, n_fake=8, seed=3)
    det = ReferenceDetector(seed=0)
    labels = [clips[e.clip_id].label for e in manifest.entries]
    det.fit([clips[e.clip_id] for e in manifest.entries], labels)
    report = evaluate(det, manifest, clips)
    assert report.accuracy >= 0.9


def test_reference_detector_errors():
    manifest, clips = _labeled_clips(n_real=2, n_fake=0)
    det = ReferenceDetector()
    with pytest.raises(DetectorError):
        det.score_clip(next(iter(clips.values())))
    with pytest.raises(ValidationError):
        det.fit(list(clips.values()), ["real", "real"])


# ---------------------------------------------------------------------------
# scenarios


def _scenario_variants(seed=0):
    """std variant with disjoint train/test identities, real+fake in both."""
    rng = np.random.default_rng(seed)
    clips, entries = {}, []
    for split, prefix in (("train", "tr"), ("test", "te")):
        for i in range(3):
            ident = f"{prefix}_p{i}"
            for label in ("real", "fake"):
                cid = f"{prefix}_{label}{i}"
                if label == "real":
                    base = rng.uniform(0.3, 0.7, (16, 16, 3))
                    px = np.stack([np.clip(base + 0.001 * t, 0, 1) for t in range(4)])
                else:
                    px = rng.uniform(0, 1, (4, 16, 16, 3))
                clips[cid] = random_clip(rng, n_frames=4, size=16, identity=ident,
                                         clip_id=cid, label=label).with_pixels(px, label=label)
                entries.append(ManifestEntry(clip_id=cid, identity=ident,
                                             label=label, split=split))
    return {"std": (DatasetManifest(entries=tuple(entries)), clips)}


def test_run_scenario_end_to_end():
    variants = _scenario_variants()
    report = run_scenario(ScenarioConfig(train_set="std", test_set="std"),
                          lambda: ReferenceDetector(seed=0), variants)
    assert isinstance(report, EvalReport)
    assert report.n == 6


def test_run_scenario_detects_identity_leakage():
    # a single manifest already rejects identity overlap at construction, so
    # smuggle the leak in through a second variant with its own manifest
    variants = _scenario_variants()
    rng = np.random.default_rng(9)
    leak_clips = {
        "leak_r": random_clip(rng, n_frames=4, size=16, identity="tr_p0",
                              clip_id="leak_r"),
        "leak_f": random_clip(rng, n_frames=4, size=16, identity="tr_p1",
                              clip_id="leak_f", label="fake"),
    }
    leak_manifest = DatasetManifest(entries=(
        ManifestEntry(clip_id="leak_r", identity="tr_p0", label="real", split="test"),
        ManifestEntry(clip_id="leak_f", identity="tr_p1", label="fake", split="test"),
    ))
    variants["std/rand"] = (leak_manifest, leak_clips)
    with pytest.raises(LeakageError):
        run_scenario(ScenarioConfig(train_set="std", test_set="std/rand"),
                     lambda: ReferenceDetector(seed=0), variants)


def test_scenario_config_validation():
    ScenarioConfig(train_set="std+std/sing", test_set="hidden")
    with pytest.raises(ValidationError):
        ScenarioConfig(train_set="bogus", test_set="std")
    with pytest.raises(ValidationError):
        ScenarioConfig(train_set="std", test_set="bogus")


def test_scenario_hidden_requires_session():
    variants = _scenario_variants()
    with pytest.raises(ValidationError):
        run_scenario(ScenarioConfig(train_set="std", test_set="hidden"),
                     lambda: ReferenceDetector(seed=0), variants)


def test_scenario_hidden_path():
    variants = _scenario_variants()
    rng = np.random.default_rng(4)
    hidden_clips = {
        "h0": random_clip(rng, n_frames=4, size=16, identity="h_p0", clip_id="h0"),
        "h1": random_clip(rng, n_frames=4, size=16, identity="h_p1", clip_id="h1",
                          label="fake"),
    }
    vault = HiddenVault({"h0": "real", "h1": "fake"},
                        identities={"h0": "h_p0", "h1": "h_p1"})
    session = HiddenSession(vault, hidden_clips)
    report = run_scenario(ScenarioConfig(train_set="std", test_set="hidden"),
                          lambda: ReferenceDetector(seed=0), variants,
                          hidden_session=session)
    assert report.n == 2
    assert 0.0 <= report.accuracy <= 1.0


# ---------------------------------------------------------------------------
# hidden vault


def test_vault_scores_and_enforces_coverage():
    vault = HiddenVault({"a": "real", "b": "fake", "c": "fake"})
    assert vault.clip_ids() == ["a", "b", "c"]
    assert vault.score([("a", 0.1), ("b", 0.9), ("c", 0.8)]) == 1.0
    assert vault.score([("a", 0.9), ("b", 0.9), ("c", 0.1)]) == pytest.approx(1 / 3)
    with pytest.raises(SubmissionError):
        vault.score([("a", 0.1), ("b", 0.9)])  # missing c
    with pytest.raises(SubmissionError):
        vault.score([("a", 0.1), ("a", 0.2), ("b", 0.9), ("c", 0.8)])  # duplicate
    with pytest.raises(SubmissionError):
        vault.score([("a", 0.1), ("b", 0.9), ("c", 0.8), ("z", 0.5)])  # unknown
    with pytest.raises(ValidationError):
        HiddenVault({"a": "maybe"})


def test_hidden_session_hides_labels():
    rng = np.random.default_rng(5)
    clips = {"a": random_clip(rng, n_frames=2, size=16, clip_id="a")}
    session = HiddenSession(HiddenVault({"a": "fake"}), clips)
    assert list(session.clips()) == ["a"]
    assert hidden_submit([("a", 0.9)], session) == 1.0


# ---------------------------------------------------------------------------
# ratings


def test_aggregate_ratings_arithmetic():
    records = [RatingRecord(clip_id="c", participant_id=f"u{i}", score=s)
               for i, s in enumerate([4, 5, 3, 4])]
    agg = aggregate_ratings(records)
    assert agg["n"] == 4
    assert agg["histogram"] == {1: 0, 2: 0, 3: 1, 4: 2, 5: 1}
    assert agg["percentages"][4] == 50.0
    assert agg["real_fraction"] == 0.75
    empty = aggregate_ratings([])
    assert empty["n"] == 0 and empty["real_fraction"] == 0.0
    with pytest.raises(ValidationError):
        RatingRecord(clip_id="c", participant_id="u", score=6)


def _ratings(clip_id, n_fooled, n_total):
    out = []
    for i in range(n_total):
        score = 5 if i < n_fooled else 2
        out.append(RatingRecord(clip_id=clip_id, participant_id=f"u{i}", score=score))
    return out


def test_curate_hidden_majority_boundary():
    ratings = _ratings("keep", 50, 100) + _ratings("drop", 49, 100)
    kept = curate_hidden(["keep", "drop"], ratings, n_raters=100)
    assert kept == ["keep"]


def test_curate_hidden_odd_rater_count():
    # ceil(5 / 2) = 3 fooled raters required
    ratings = _ratings("yes", 3, 5) + _ratings("no", 2, 5)
    assert curate_hidden(["yes", "no"], ratings, n_raters=5) == ["yes"]


def test_curate_hidden_requires_full_coverage():
    ratings = _ratings("c", 3, 4)
    with pytest.raises(InsufficientRatingsError):
        curate_hidden(["c"], ratings, n_raters=5)


# ---------------------------------------------------------------------------
# generation metrics


def test_fid_identity_is_zero():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(500, 8))
    assert fid(x, x) < 1e-8


def _fid_closed_form(mu_a, cov_a, mu_b, cov_b):
    import scipy.linalg

    sqrt_prod = scipy.linalg.sqrtm(cov_a @ cov_b)
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a + cov_b - 2 * np.real(sqrt_prod)))


def test_fid_matches_formula_on_sample_moments():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(300, 4))
    b = rng.normal(loc=0.5, size=(400, 4))
    expected = _fid_closed_form(a.mean(axis=0), np.cov(a, rowvar=False),
                                b.mean(axis=0), np.cov(b, rowvar=False))
    assert fid(a, b) == pytest.approx(expected, rel=1e-9)


def test_fid_univariate_closed_form():
    rng = np.random.default_rng(8)
    a = rng.normal(loc=0.0, scale=1.0, size=(2000, 1))
    b = rng.normal(loc=2.0, scale=3.0, size=(2000, 1))
    # 1-D Frechet distance: (m1-m2)^2 + (s1-s2)^2, on the sample moments
    s1, s2 = a.std(ddof=1), b.std(ddof=1)
    expected = (a.mean() - b.mean()) ** 2 + (s1 - s2) ** 2
    assert fid(a, b) == pytest.approx(float(expected), rel=1e-9)


def test_fid_shape_error():
    with pytest.raises(ShapeMismatchError):
        fid(np.zeros((5, 3)), np.zeros((5, 4)))


def test_is_score_uniform_and_confident():
    uniform = np.full((10, 4), 0.25)
    assert is_score(uniform) == pytest.approx(1.0, abs=1e-12)
    onehot = np.eye(5)
    assert is_score(onehot) == pytest.approx(5.0, rel=1e-9)
    with pytest.raises(ValidationError):
        is_score(np.full((3, 4), 0.3))
    with pytest.raises(ShapeMismatchError):
        is_score(np.zeros(4))


def test_rerender_error_values():
    rng = np.random.default_rng(9)
    clip = random_clip(rng, n_frames=3, size=16)
    maps, per_frame, overall = rerender_error(clip, clip)
    assert maps.shape == (3, 16, 16)
    assert overall == 0.0
    # +1/255 in one channel everywhere -> distance exactly 1.0 per pixel
    q = np.rint(clip.pixels() * 255) / 255.0
    q[..., 0] = np.minimum(q[..., 0], 254 / 255.0)
    base = clip.with_pixels(q)
    shifted_px = q.copy()
    shifted_px[..., 0] += 1.0 / 255.0
    shifted = clip.with_pixels(shifted_px)
    _, _, overall = rerender_error(base, shifted)
    assert overall == pytest.approx(1.0, abs=1e-9)


def test_rerender_error_oracle():
    rng = np.random.default_rng(10)
    a = random_clip(rng, n_frames=2, size=16)
    b = random_clip(rng, n_frames=2, size=16)
    maps, per_frame, overall = rerender_error(a, b)
    diff = 255.0 * (a.pixels() - b.pixels())
    expected = np.sqrt((diff ** 2).sum(axis=3))
    assert np.allclose(maps, expected, atol=1e-9)
    assert overall == pytest.approx(expected.mean(), abs=1e-9)
    with pytest.raises(ShapeMismatchError):
        rerender_error(a, random_clip(rng, n_frames=3, size=16))
