"""End-to-end optimization of the face-swap objective over both domains,
unpaired-batch construction, ablation switches, and the full swap pipeline.

The total objective is
``L = l1 * L_recon + l2 * L_KL + l3 * L_madain + l4 * L_temporal`` where the
reconstruction term combines MAE and SSIM per domain, the KL term pulls both
posteriors toward the standard normal, the style term is computed on a
cross-domain reenactment passed through the fusion decoder, and the temporal
term compares block-matching flow of reconstructed and original frame pairs
(one previous frame, never warped).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import cv2
import numpy as np
import torch
from torch import nn

from .errors import ArityError, IdentityLookupError, PairingError, ValidationError
from .flow import block_match_flow, soft_block_match_flow, temporal_loss
from .heatmap import render_heatmap
from .madain import (
    DEFAULT_MASK_BLUR_SIGMA,
    FusionDecoder,
    Mask,
    PerceptualExtractor,
    RandomConvExtractor,
    _madain_tensor,
    blur_mask,
    madain_loss,
)
from .media import FaceFrame, VideoClip
from .vae import (
    BundleConfig,
    EncoderDecoderBundle,
    frame_to_tensor,
    kl_loss,
    pixel_loss,
    reenact,
    reparameterize,
    save_bundle,
    ssim_loss,
    tensor_to_frame,
)
from .synth import LANDMARK_COUNT


@dataclass(frozen=True)
class LossWeights:
    lambda_1: float = 1.0  # reconstruction
    lambda_2: float = 0.01  # KL
    lambda_3: float = 1.0  # MAdaIN
    lambda_4: float = 0.1  # temporal
    lambda_r1: float = 1.0  # pixel part of reconstruction
    lambda_r2: float = 1.0  # SSIM part of reconstruction
    lambda_ma: float = 10.0  # style part of MAdaIN

    def __post_init__(self):
        for name in ("lambda_1", "lambda_2", "lambda_3", "lambda_4",
                     "lambda_r1", "lambda_r2", "lambda_ma"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 5e-5
    beta1: float = 0.5
    beta2: float = 0.999
    steps: int = 300
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("betas must be in [0, 1)")


@dataclass(frozen=True)
class AblationFlags:
    use_madain: bool = True
    use_heatmap_structure: bool = True
    use_unpaired: bool = True
    use_temporal: bool = True


@dataclass(frozen=True)
class TemporalConfig:
    block: int = 8
    radius: int = 4
    temperature: float = 0.05


@dataclass
class FusionModule:
    """Fusion decoder + perceptual extractor + mask parameters."""

    d_delta: nn.Module
    extractor: PerceptualExtractor
    mask_blur_sigma: float = DEFAULT_MASK_BLUR_SIGMA


def mask_from_landmarks(landmarks: np.ndarray, shape: tuple[int, int]) -> Mask:
    """Binary face mask from the convex hull of the landmark points."""
    h, w = shape
    pts = np.asarray(landmarks, dtype=np.float64)
    hull = cv2.convexHull(pts.astype(np.float32)).reshape(-1, 2)
    canvas = np.zeros((h, w), dtype=np.uint8)
    cv2.fillConvexPoly(canvas, np.rint(hull).astype(np.int32), 1)
    return Mask(values=canvas.astype(np.float64), kind="binary")


def face_mask(frame: FaceFrame, blur_sigma: float | None = None) -> Mask:
    """Blurred face mask for a frame carrying landmarks."""
    if frame.landmarks is None:
        raise ValidationError("frame carries no landmarks; cannot derive a mask")
    sigma = blur_sigma if blur_sigma is not None else DEFAULT_MASK_BLUR_SIGMA * frame.width / 128.0
    return blur_mask(mask_from_landmarks(frame.landmarks, (frame.height, frame.width)), sigma)


# ---------------------------------------------------------------------------
# unpaired batch construction


def _identity_positions(clips, identity):
    """All (clip, t) positions of the identity with a previous frame, plus the
    full pool of its frames."""
    pool = []
    positions = []
    for ci, clip in enumerate(clips):
        if clip.identity != identity:
            continue
        for t, f in enumerate(clip.frames):
            pool.append((ci, t, f))
            if t >= 1:
                positions.append((ci, t))
    return positions, pool


def build_unpaired_batch(clips, identity: str, rng_seed: int, count: int | None = None):
    """Tuples (x_t, x_prime, x_prev): x_prime is a different frame of the same
    identity, x_prev is the immediate predecessor of x_t within its clip."""
    positions, pool = _identity_positions(clips, identity)
    if len(pool) < 2:
        raise PairingError(f"identity {identity!r} has {len(pool)} frame(s); need >= 2")
    if not positions:
        raise PairingError(f"identity {identity!r} has no frame with a predecessor")
    rng = np.random.default_rng(rng_seed)
    if count is None:
        chosen = positions
    else:
        idx = rng.integers(0, len(positions), size=count)
        chosen = [positions[i] for i in idx]
    batch = []
    for ci, t in chosen:
        clip = clips[ci]
        x_t = clip.frames[t]
        x_prev = clip.frames[t - 1]
        alternatives = [f for (cj, tj, f) in pool if not (cj == ci and tj == t)]
        x_prime = alternatives[int(rng.integers(0, len(alternatives)))]
        batch.append((x_t, x_prime, x_prev))
    return batch


# ---------------------------------------------------------------------------
# objective


def _stack_frames(frames, dtype):
    return torch.stack([frame_to_tensor(f, dtype=dtype) for f in frames])


def _structure_input(frames, bundle: EncoderDecoderBundle, dtype):
    cfg = bundle.config
    if not cfg.structure_from_heatmap:
        return _stack_frames(frames, dtype)
    sigma = 2.0 * cfg.image_size / 64.0
    hms = []
    for f in frames:
        if f.landmarks is None:
            raise ValidationError("frame has no landmarks for heatmap extraction")
        hm = render_heatmap(f.landmarks, (f.height, f.width), sigma=sigma,
                            out_size=(cfg.image_size, cfg.image_size))
        hms.append(torch.as_tensor(np.array(hm.channels), dtype=dtype))
    return torch.stack(hms)


def total_loss(batch: dict, bundle: EncoderDecoderBundle, fusion: FusionModule,
               weights: LossWeights, flags: AblationFlags,
               temporal_cfg: TemporalConfig | None = None,
               generator: torch.Generator | None = None):
    """(scalar total, breakdown) on a two-domain batch.

    ``batch`` maps 'source'/'target' to lists of (x_t, x_prime, x_prev)
    tuples. The breakdown reports each term before weighting; disabled flags
    zero the term and skip its computation entirely.
    """
    tcfg = temporal_cfg or TemporalConfig()
    dtype = next(bundle.parameters()).dtype
    recon_total = torch.zeros((), dtype=dtype)
    kl_total = torch.zeros((), dtype=dtype)
    temporal_total = torch.zeros((), dtype=dtype)
    madain_total = torch.zeros((), dtype=dtype)
    recon_images = {}
    posteriors = {}

    for domain in ("source", "target"):
        items = batch.get(domain, [])
        if not items:
            continue
        x = _stack_frames([it[0] for it in items], dtype)
        appearance_src = [it[1] for it in items] if flags.use_unpaired else [it[0] for it in items]
        x_app = _stack_frames(appearance_src, dtype)
        struct_in = _structure_input([it[0] for it in items], bundle, dtype)

        mu_s, sig_s = bundle.e_alpha(struct_in)
        mu_a, sig_a = bundle.e_beta(x_app)
        eps_s = torch.randn(mu_s.shape, generator=generator, dtype=dtype)
        eps_a = torch.randn(mu_a.shape, generator=generator, dtype=dtype)
        z_s = reparameterize(mu_s, sig_s, eps_s)
        z_a = reparameterize(mu_a, sig_a, eps_a)
        recon = bundle.decode(z_s, z_a)
        recon_images[domain] = recon
        posteriors[domain] = (mu_s, sig_s, mu_a, sig_a)

        recon_total = recon_total + (
            weights.lambda_r1 * pixel_loss(recon, x)
            + weights.lambda_r2 * ssim_loss(recon, x)
        )
        n = len(items)
        kl_total = kl_total + (kl_loss(mu_s, sig_s) + kl_loss(mu_a, sig_a)) / n

        if flags.use_temporal:
            prev = _stack_frames([it[2] for it in items], dtype)
            with torch.no_grad():
                f_orig = torch.stack([
                    torch.as_tensor(
                        block_match_flow(xt, pv, tcfg.block, tcfg.radius).values,
                        dtype=dtype,
                    )
                    for xt, pv in zip(x, prev)
                ])
            f_recon = soft_block_match_flow(recon, prev, tcfg.block, tcfg.radius,
                                            tcfg.temperature)
            temporal_total = temporal_total + temporal_loss(f_recon, f_orig)

    if flags.use_madain and "source" in recon_images and "target" in recon_images:
        src_items = batch["source"]
        tgt_items = batch["target"]
        n_pairs = min(len(src_items), len(tgt_items))
        mu_s_t = posteriors["target"][0]
        mu_a_s = posteriors["source"][2]
        d_t = bundle.decode(mu_s_t[:n_pairs], mu_a_s[:n_pairs])
        for i in range(n_pairs):
            y_frame = tgt_items[i][0]
            y = frame_to_tensor(y_frame, dtype=dtype)
            mb = face_mask(y_frame, blur_sigma=fusion.mask_blur_sigma * y_frame.width / 128.0)
            m = torch.as_tensor(np.array(mb.values), dtype=dtype)
            matched = _madain_tensor(d_t[i], y, m)
            rendered = fusion.d_delta(matched.unsqueeze(0))[0]
            swapped = m * rendered + (1.0 - m) * y
            l_c, l_s = madain_loss(swapped, d_t[i], y, mb, fusion.extractor)
            madain_total = madain_total + (l_c + weights.lambda_ma * l_s) / n_pairs

    total = (
        weights.lambda_1 * recon_total
        + weights.lambda_2 * kl_total
        + weights.lambda_3 * madain_total
        + weights.lambda_4 * temporal_total
    )
    breakdown = {
        "recon": float(recon_total.detach()),
        "kl": float(kl_total.detach()),
        "madain": float(madain_total.detach()),
        "temporal": float(temporal_total.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    bundle: EncoderDecoderBundle
    fusion: FusionModule
    history: list
    identity_bank: dict  # identity tag -> exemplar FaceFrame
    source_identities: tuple = ()
    target_identities: tuple = ()


def _domain_split(identities):
    identities = sorted(identities)
    half = max(1, len(identities) // 2)
    return tuple(identities[:half]), tuple(identities[half:]) or tuple(identities[:half])


def train(
    clips,
    config: OptimizerConfig | None = None,
    weights: LossWeights | None = None,
    flags: AblationFlags | None = None,
    bundle_config: BundleConfig | None = None,
    temporal_cfg: TemporalConfig | None = None,
    source_identities=None,
    target_identities=None,
    checkpoint_dir: str | None = None,
    checkpoint_every: int = 100,
) -> TrainResult:
    """Jointly optimize encoders, decoder, and fusion decoder with Adam.

    Deterministic given the seed in single-worker execution. Aborts with a
    RuntimeError carrying the step index and loss breakdown if the loss goes
    non-finite.
    """
    config = config or OptimizerConfig()
    weights = weights or LossWeights()
    flags = flags or AblationFlags()

    identities = sorted({c.identity for c in clips})
    if not identities:
        raise ArityError("no clips given")
    if source_identities is None or target_identities is None:
        src, tgt = _domain_split(identities)
        source_identities = tuple(source_identities or src)
        target_identities = tuple(target_identities or tgt)

    size = clips[0].frames[0].width
    if bundle_config is None:
        bundle_config = BundleConfig(
            image_size=size,
            heatmap_channels=LANDMARK_COUNT,
            latent_dim=128,
            structure_from_heatmap=flags.use_heatmap_structure,
        )
    elif bundle_config.structure_from_heatmap != flags.use_heatmap_structure:
        bundle_config = replace(bundle_config, structure_from_heatmap=flags.use_heatmap_structure)

    torch.manual_seed(config.seed)
    bundle = EncoderDecoderBundle(bundle_config)
    fusion = FusionModule(
        d_delta=FusionDecoder(),
        extractor=RandomConvExtractor(seed=config.seed),
        mask_blur_sigma=DEFAULT_MASK_BLUR_SIGMA,
    )
    tcfg = temporal_cfg or TemporalConfig(block=max(2, size // 8), radius=2)

    params = list(bundle.parameters()) + [p for p in fusion.d_delta.parameters()]
    opt = torch.optim.Adam(params, lr=config.learning_rate,
                           betas=(config.beta1, config.beta2))
    gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    history = []
    per_domain = max(1, config.batch_size // 2)
    for step in range(config.steps):
        batch = {}
        for domain, idents in (("source", source_identities), ("target", target_identities)):
            items = []
            for _ in range(per_domain):
                ident = idents[int(rng.integers(0, len(idents)))]
                items.extend(
                    build_unpaired_batch(clips, ident, int(rng.integers(0, 2**31)), count=1)
                )
            batch[domain] = items
        opt.zero_grad()
        loss, breakdown = total_loss(batch, bundle, fusion, weights, flags,
                                     temporal_cfg=tcfg, generator=gen)
        if not np.isfinite(breakdown["total"]):
            raise RuntimeError(f"training diverged at step {step}: {breakdown}")
        loss.backward()
        opt.step()
        history.append(breakdown)
        if checkpoint_dir and (step + 1) % checkpoint_every == 0:
            os.makedirs(checkpoint_dir, exist_ok=True)
            save_bundle(bundle, os.path.join(checkpoint_dir, f"step{step + 1:06d}.bundle"))

    bank = {}
    for clip in clips:
        bank.setdefault(clip.identity, clip.frames[0])
    return TrainResult(
        bundle=bundle,
        fusion=fusion,
        history=history,
        identity_bank=bank,
        source_identities=tuple(source_identities),
        target_identities=tuple(target_identities),
    )


# ---------------------------------------------------------------------------
# inference pipeline


def swap_frame(source_frame: FaceFrame, target_frame: FaceFrame,
               bundle: EncoderDecoderBundle, fusion: FusionModule) -> FaceFrame:
    from .madain import fuse  # local import to avoid a cycle at module load
    cfg = bundle.config
    sigma = 2.0 * cfg.image_size / 64.0
    if target_frame.landmarks is None:
        raise ValidationError("target frame carries no landmarks")
    hm = render_heatmap(target_frame.landmarks, (target_frame.height, target_frame.width),
                        sigma=sigma, out_size=(cfg.image_size, cfg.image_size))
    reenacted = reenact(source_frame, hm, bundle)
    mb = face_mask(target_frame, blur_sigma=fusion.mask_blur_sigma * target_frame.width / 128.0)
    out = fuse(reenacted, target_frame, mb, d_delta=fusion.d_delta)
    return replace(out, frame_index=target_frame.frame_index)


def swap(source_id: str, target_clip: VideoClip, result: TrainResult) -> VideoClip:
    """Swap the source identity onto every frame of the target clip."""
    if source_id not in result.identity_bank:
        raise IdentityLookupError(source_id)
    src = result.identity_bank[source_id]
    frames = [
        swap_frame(src, f, result.bundle, result.fusion) for f in target_clip.frames
    ]
    return VideoClip(
        frames=tuple(frames),
        fps=target_clip.fps,
        clip_id=f"{target_clip.clip_id}__swap_{source_id}",
        label="fake",
    )


def self_reenact_clip(clip: VideoClip, bundle: EncoderDecoderBundle) -> VideoClip:
    """Reenact each frame with its own structure (ground truth known)."""
    cfg = bundle.config
    sigma = 2.0 * cfg.image_size / 64.0
    frames = []
    for f in clip.frames:
        hm = render_heatmap(f.landmarks, (f.height, f.width), sigma=sigma,
                            out_size=(cfg.image_size, cfg.image_size))
        out = reenact(f, hm, bundle)
        frames.append(replace(out, frame_index=f.frame_index, identity=f.identity))
    return VideoClip(frames=tuple(frames), fps=clip.fps,
                     clip_id=f"{clip.clip_id}__selfreenact", label="fake")
