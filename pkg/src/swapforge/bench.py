"""Benchmark protocol engine: identity-grouped splits, detector interface
with image/clip-level aggregation, scenario runner, hidden-test scoring with
server-side labels, generation metrics, and user-study aggregation.

Train and test identity sets are always disjoint; any overlap aborts the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    ArityError,
    DetectorError,
    InsufficientRatingsError,
    LeakageError,
    ShapeMismatchError,
    SubmissionError,
    ValidationError,
)
from .media import DatasetManifest, VideoClip

SPLIT_RATIOS = (7, 1, 2)
DEFAULT_THRESHOLD = 0.5


# ---------------------------------------------------------------------------
# splits


def split_by_identity(identities, ratios=SPLIT_RATIOS, seed: int = 0) -> dict:
    """Disjoint, exhaustive identity -> split assignment (largest remainder)."""
    identities = sorted(set(identities))
    n = len(identities)
    if n < len(ratios):
        raise ArityError(f"{n} identities cannot fill {len(ratios)} splits")
    total = sum(ratios)
    exact = [n * r / total for r in ratios]
    counts = [int(v) for v in exact]
    remainders = [v - c for v, c in zip(exact, counts)]
    while sum(counts) < n:
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(n))
    names = ("train", "val", "test")
    assignment = {}
    pos = 0
    for name, count in zip(names, counts):
        for i in order[pos:pos + count]:
            assignment[identities[i]] = name
        pos += count
    return assignment


# ---------------------------------------------------------------------------
# detectors


class Detector:
    """Plug-in contract: clip -> fake probability in [0, 1].

    ``granularity`` is image_level (per-frame scores averaged over the clip)
    or clip_level (one score per clip). Training, if any, happens in ``fit``.
    """

    granularity = "clip_level"

    def fit(self, clips, labels):
        return self

    def score_clip(self, clip: VideoClip) -> float:
        raise NotImplementedError

    def score_frames(self, clip: VideoClip) -> np.ndarray:
        raise NotImplementedError


def clip_score(detector: Detector, clip: VideoClip) -> float:
    if detector.granularity == "image_level":
        scores = np.asarray(detector.score_frames(clip), dtype=np.float64)
        value = float(scores.mean())
    else:
        value = float(detector.score_clip(clip))
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise DetectorError(f"detector returned invalid score {value!r} for clip {clip.clip_id!r}")
    return value


class OracleDetector(Detector):
    """Reads the truth labels it was given; used for protocol self-tests."""

    def __init__(self, labels: dict, invert: bool = False):
        self.labels = labels
        self.invert = invert

    def score_clip(self, clip):
        fake = self.labels[clip.clip_id] == "fake"
        if self.invert:
            fake = not fake
        return 1.0 if fake else 0.0


class ConstantDetector(Detector):
    def __init__(self, value: float = 0.5, granularity: str = "clip_level"):
        self.value = value
        self.granularity = granularity

    def score_clip(self, clip):
        return self.value

    def score_frames(self, clip):
        return np.full(len(clip), self.value)


def _clip_features(clip: VideoClip) -> np.ndarray:
    """Cheap temporal + texture statistics for the reference detector."""
    px = clip.pixels()
    diffs = np.abs(np.diff(px, axis=0))
    gray = px.mean(axis=3)
    gx = np.abs(np.diff(gray, axis=2)).mean()
    gy = np.abs(np.diff(gray, axis=1)).mean()
    return np.array(
        [
            diffs.mean(),
            diffs.std(),
            diffs.max(),
            gx,
            gy,
            px.mean(),
            px.std(),
            gray.var(axis=0).mean(),
        ]
    )


class ReferenceDetector(Detector):
    """Tiny frame-difference statistics + logistic regression.

    Ships for harness tests only; its accuracy carries no external claim.
    """

    granularity = "clip_level"

    def __init__(self, seed: int = 0):
        from sklearn.linear_model import LogisticRegression
        from sklearn.preprocessing import StandardScaler

        self._scaler = StandardScaler()
        self._clf = LogisticRegression(max_iter=500, random_state=seed)
        self._fitted = False

    def fit(self, clips, labels):
        x = np.stack([_clip_features(c) for c in clips])
        y = np.asarray([1 if lab == "fake" else 0 for lab in labels])
        if len(set(y.tolist())) < 2:
            raise ValidationError("reference detector needs both real and fake training clips")
        self._clf.fit(self._scaler.fit_transform(x), y)
        self._fitted = True
        return self

    def score_clip(self, clip):
        if not self._fitted:
            raise DetectorError("reference detector used before fit")
        feats = self._scaler.transform(_clip_features(clip)[None])
        return float(self._clf.predict_proba(feats)[0, 1])


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    n: int
    per_clip: tuple  # (clip_id, score, predicted, truth)
    threshold: float


def evaluate(detector: Detector, manifest: DatasetManifest, clips: dict,
             threshold: float = DEFAULT_THRESHOLD, split: str | None = "test") -> EvalReport:
    """Binary detection accuracy; predicted fake iff score > threshold."""
    entries = manifest.subset(split)
    per_clip = []
    correct = 0
    for e in entries:
        clip = clips[e.clip_id]
        score = clip_score(detector, clip)
        predicted = "fake" if score > threshold else "real"
        if e.label not in ("real", "fake"):
            raise ValidationError(f"entry {e.clip_id!r} has no truth label for evaluation")
        correct += predicted == e.label
        per_clip.append((e.clip_id, score, predicted, e.label))
    n = len(per_clip)
    return EvalReport(
        accuracy=correct / n if n else 0.0,
        n=n,
        per_clip=tuple(per_clip),
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# scenario runner


TRAIN_VARIANTS = ("std", "std/sing", "std/rand", "std+std/sing", "std+std/rand", "std+std/mix")
TEST_VARIANTS = ("std", "std/sing", "std/rand", "hidden")


@dataclass(frozen=True)
class ScenarioConfig:
    train_set: str
    test_set: str

    def __post_init__(self):
        if self.train_set not in TRAIN_VARIANTS:
            raise ValidationError(f"unknown train variant {self.train_set!r}")
        if self.test_set not in TEST_VARIANTS:
            raise ValidationError(f"unknown test variant {self.test_set!r}")


def _gather(variants: dict, name: str, split: str):
    """(entries, clips) for one variant name, resolving 'a+b' unions."""
    entries = []
    clips = {}
    for part in name.split("+"):
        if part not in variants:
            raise ValidationError(f"variant {part!r} not built")
        manifest, clip_map = variants[part]
        for e in manifest.subset(split):
            entries.append(e)
            clips[e.clip_id] = clip_map[e.clip_id]
    return entries, clips


def run_scenario(cfg: ScenarioConfig, detector_factory, variants: dict,
                 hidden_session=None, threshold: float = DEFAULT_THRESHOLD):
    """Fit on the train variant's train split, evaluate on the test variant's
    test split. Identity leakage between the two sets aborts the run; the
    hidden test set is scored through the hidden service, never locally."""
    train_entries, train_clips = _gather(variants, cfg.train_set, "train")
    detector = detector_factory()
    detector.fit(
        [train_clips[e.clip_id] for e in train_entries],
        [e.label for e in train_entries],
    )
    train_idents = {e.identity for e in train_entries}

    if cfg.test_set == "hidden":
        if hidden_session is None:
            raise ValidationError("hidden scenario requires a hidden session")
        scores = [
            (cid, clip_score(detector, clip))
            for cid, clip in sorted(hidden_session.clips().items())
        ]
        shared = train_idents & set(hidden_session.identities())
        if shared:
            raise LeakageError(f"identities shared with hidden set: {sorted(shared)}")
        accuracy = hidden_session.submit(scores)
        return EvalReport(accuracy=accuracy, n=len(scores), per_clip=(), threshold=threshold)

    test_entries, test_clips = _gather(variants, cfg.test_set, "test")
    shared = train_idents & {e.identity for e in test_entries}
    if shared:
        raise LeakageError(f"identities shared between train and test: {sorted(shared)}")
    shared_clips = {e.clip_id for e in train_entries} & {e.clip_id for e in test_entries}
    if shared_clips:
        raise LeakageError(f"clips shared between train and test: {sorted(shared_clips)}")
    manifest = DatasetManifest(entries=tuple(test_entries), seed=0)
    return evaluate(detector, manifest, test_clips, threshold=threshold, split="test")


# ---------------------------------------------------------------------------
# hidden test set


class HiddenVault:
    """Server-side label store; clients only ever see clip ids and media."""

    def __init__(self, labels: dict, identities: dict | None = None,
                 threshold: float = DEFAULT_THRESHOLD):
        for label in labels.values():
            if label not in ("real", "fake"):
                raise ValidationError(f"vault labels must be real/fake, got {label!r}")
        self._labels = dict(labels)
        self._identities = dict(identities or {})
        self.threshold = threshold

    def clip_ids(self):
        return sorted(self._labels)

    def identities(self):
        return sorted(set(self._identities.values()))

    def score(self, scores) -> float:
        """Stateless accuracy scoring; enforces exactly-once coverage."""
        seen = {}
        duplicates = []
        for cid, value in scores:
            if cid in seen:
                duplicates.append(cid)
            seen[cid] = float(value)
        missing = [cid for cid in self._labels if cid not in seen]
        unknown = [cid for cid in seen if cid not in self._labels]
        if duplicates or missing or unknown:
            raise SubmissionError(
                f"bad submission: missing={sorted(missing)} duplicate={sorted(duplicates)} "
                f"unknown={sorted(unknown)}"
            )
        correct = 0
        for cid, truth in self._labels.items():
            predicted = "fake" if seen[cid] > self.threshold else "real"
            correct += predicted == truth
        return correct / len(self._labels)


class HiddenSession:
    """Client-facing handle: lists clips, submits scores, never sees labels."""

    def __init__(self, vault: HiddenVault, clips: dict):
        self._vault = vault
        self._clips = dict(clips)

    def clips(self) -> dict:
        return {cid: self._clips[cid] for cid in self._vault.clip_ids()}

    def identities(self):
        return self._vault.identities()

    def submit(self, scores) -> float:
        return self._vault.score(scores)


def hidden_submit(scores, session: HiddenSession) -> float:
    return session.submit(scores)


# ---------------------------------------------------------------------------
# user study


@dataclass(frozen=True)
class RatingRecord:
    clip_id: str
    participant_id: str
    score: int
    timestamp: str = ""

    def __post_init__(self):
        if not 1 <= int(self.score) <= 5:
            raise ValidationError(f"score must be in 1..5, got {self.score}")


def aggregate_ratings(records) -> dict:
    """Per-level percentages plus the fraction of 'real' verdicts (score 4-5)."""
    records = list(records)
    histogram = {level: 0 for level in range(1, 6)}
    for r in records:
        histogram[int(r.score)] += 1
    n = len(records)
    if n == 0:
        return {"n": 0, "histogram": histogram, "percentages": {k: 0.0 for k in histogram},
                "real_fraction": 0.0}
    return {
        "n": n,
        "histogram": histogram,
        "percentages": {k: 100.0 * v / n for k, v in histogram.items()},
        "real_fraction": (histogram[4] + histogram[5]) / n,
    }


def curate_hidden(candidates, ratings, n_raters: int):
    """Keep candidates that fooled at least ceil(n_raters / 2) raters.

    A rater is fooled when they score the clip 4 or 5 ('real'). Every
    candidate must have been rated by at least n_raters participants.
    """
    by_clip = {}
    for r in ratings:
        by_clip.setdefault(r.clip_id, []).append(r)
    threshold = math.ceil(n_raters / 2)
    kept = []
    for cid in candidates:
        clip_ratings = by_clip.get(cid, [])
        if len(clip_ratings) < n_raters:
            raise InsufficientRatingsError(
                f"clip {cid!r} has {len(clip_ratings)} ratings; study requires {n_raters}"
            )
        fooled = sum(1 for r in clip_ratings if r.score >= 4)
        if fooled >= threshold:
            kept.append(cid)
    return kept


# ---------------------------------------------------------------------------
# generation metrics


def fid(features_a, features_b, eps: float = 0.0) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    a = np.atleast_2d(np.asarray(features_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(features_b, dtype=np.float64))
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatchError("feature sets must be NxD with matching D")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False).reshape(b.shape[1], b.shape[1])
    if eps:
        cov_a = cov_a + eps * np.eye(len(cov_a))
        cov_b = cov_b + eps * np.eye(len(cov_b))
    sqrt_prod, _ = scipy.linalg.sqrtm(cov_a @ cov_b, disp=False)
    if not np.isfinite(sqrt_prod).all():
        raise FloatingPointError("covariance square root failed; consider eps > 0")
    if np.iscomplexobj(sqrt_prod):
        sqrt_prod = sqrt_prod.real
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a + cov_b - 2.0 * sqrt_prod))
    return max(value, 0.0)


def is_score(predictions) -> float:
    """exp(mean KL(p(y|x) || p(y))) over softmax prediction vectors."""
    p = np.asarray(predictions, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeMismatchError("predictions must be NxC")
    if (p < 0).any() or not np.allclose(p.sum(axis=1), 1.0, atol=1e-6):
        raise ValidationError("each prediction must be a probability vector")
    marginal = p.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logratio = np.where(p > 0, np.log(p / marginal), 0.0)
    kl = (p * logratio).sum(axis=1)
    return float(np.exp(kl.mean()))


def rerender_error(a: VideoClip, b: VideoClip):
    """Per-pixel RGB Euclidean distance in [0, 255] units.

    Returns (T x H x W error maps, per-frame means, overall mean).
    """
    pa, pb = a.pixels(), b.pixels()
    if pa.shape != pb.shape:
        raise ShapeMismatchError(f"clip shapes differ: {pa.shape} vs {pb.shape}")
    diff = 255.0 * (pa.astype(np.float64) - pb.astype(np.float64))
    maps = np.sqrt((diff * diff).sum(axis=3))
    per_frame = maps.mean(axis=(1, 2))
    return maps, per_frame, float(per_frame.mean())
