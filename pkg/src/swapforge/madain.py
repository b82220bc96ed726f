"""Masked adaptive instance normalization, re-decoding, and compositing.

``madain(c, s) = sigma(s) * (c - mu(c)) / sigma(c) + mu(s)`` where the
statistics are computed per channel over the masked region only. ``fuse``
re-decodes the style-matched face through a small decoder and composites it
onto the target background with a blurred mask, so pixels where the mask is
zero keep the target bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import (
    DegenerateStyleError,
    DomainError,
    ShapeMismatchError,
    ValidationError,
)
from .media import FaceFrame, Mask
from .vae import _as_image_batch, tensor_to_frame

DEFAULT_MASK_BLUR_SIGMA = 3.0  # px at 128x128, scaled with resolution
DEFAULT_STYLE_WEIGHT = 10.0
_EPS = 0.0  # stats are exact; degenerate styles raise instead of being fudged


@dataclass(frozen=True)
class StyleStats:
    mean: np.ndarray  # per channel
    std: np.ndarray  # per channel, >= 0
    support: np.ndarray  # boolean HxW region the stats were computed over

    def __post_init__(self):
        if (np.asarray(self.std) < 0).any():
            raise ValidationError("std must be non-negative")


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    radius = max(1, int(np.ceil(4.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur2d(values: np.ndarray, sigma: float) -> np.ndarray:
    """Separable normalized Gaussian convolution with reflective borders."""
    k = gaussian_kernel_1d(sigma)
    r = len(k) // 2
    padded = np.pad(values, ((r, r), (0, 0)), mode="reflect")
    rows = np.apply_along_axis(lambda col: np.convolve(col, k, mode="valid"), 0, padded)
    padded = np.pad(rows, ((0, 0), (r, r)), mode="reflect")
    return np.apply_along_axis(lambda row: np.convolve(row, k, mode="valid"), 1, padded)


def blur_mask(mask: Mask, sigma: float) -> Mask:
    if mask.kind != "binary":
        raise ValidationError("blur_mask expects a binary mask")
    blurred = np.clip(_blur2d(np.asarray(mask.values, dtype=np.float64), sigma), 0.0, 1.0)
    return Mask(values=blurred, kind="blurred")


def masked_stats(image: torch.Tensor, mask: torch.Tensor) -> tuple:
    """Per-channel mean/std of mask*image over pixels with mask weight > 0."""
    support = mask > 0
    n = support.sum()
    if n == 0:
        raise DegenerateStyleError("mask has empty support")
    masked = image * mask
    vals = masked[:, support]  # C x N
    mean = vals.mean(dim=1)
    std = torch.sqrt(torch.clamp((vals * vals).mean(dim=1) - mean * mean, min=0.0))
    return mean, std


def _madain_tensor(content: torch.Tensor, style: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """(C,H,W) tensors; returns the style-matched image (content outside mask)."""
    mu_c, sd_c = masked_stats(content, mask)
    mu_s, sd_s = masked_stats(style, mask)
    if (sd_c <= 0).any():
        raise DegenerateStyleError("masked content region has zero std in some channel")
    c = content * mask
    normed = sd_s[:, None, None] * (c - mu_c[:, None, None]) / sd_c[:, None, None] + mu_s[:, None, None]
    support = (mask > 0).to(content.dtype)
    return normed * support + content * (1.0 - support)


def madain(content, style, mask_b: Mask):
    """Masked AdaIN; numpy/FaceFrame in, FaceFrame out (unmasked region untouched)."""
    c = _as_image_batch(content, dtype=torch.float64)[0]
    s = _as_image_batch(style, dtype=torch.float64)[0]
    if c.shape != s.shape:
        raise ShapeMismatchError("content and style must share a shape")
    m = torch.as_tensor(np.array(mask_b.values), dtype=torch.float64)
    if m.shape != c.shape[1:]:
        raise ShapeMismatchError("mask must match image HxW")
    out = torch.clamp(_madain_tensor(c, s, m), 0.0, 1.0)
    identity = content.identity if isinstance(content, FaceFrame) else ""
    return tensor_to_frame(out, identity=identity)


class PerceptualExtractor(nn.Module):
    """Plug-in contract: image -> list of L feature tensors (fixed shapes)."""

    num_layers = 1

    def forward(self, x: torch.Tensor) -> list:
        raise NotImplementedError


class IdentityExtractor(PerceptualExtractor):
    """Single layer returning the image itself; used by oracle tests."""

    num_layers = 1

    def forward(self, x):
        return [x]


class RandomConvExtractor(PerceptualExtractor):
    """Fixed random-weight conv stack standing in for a pretrained backbone.

    Four stages with stride-2 downsampling, mirroring a four-stage perceptual
    network; weights are frozen at construction.
    """

    num_layers = 4

    def __init__(self, channels=(8, 16, 32, 64), seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        convs = []
        ch = 3
        for w in channels:
            conv = nn.Conv2d(ch, w, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * 0.2)
                conv.bias.zero_()
            convs.append(conv)
            ch = w
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = []
        h = x
        for conv in self.convs:
            h = torch.relu(conv(h))
            feats.append(h)
        return feats


class FusionDecoder(nn.Module):
    """Small residual decoder re-rendering the style-matched face."""

    def __init__(self, width: int = 16, kernel: int = 3, bias: bool = True):
        super().__init__()
        p = kernel // 2
        self.net = nn.Sequential(
            nn.Conv2d(3, width, kernel, padding=p, bias=bias),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 3, kernel, padding=p, bias=bias),
        )
        # start close to the identity mapping so early training is stable
        with torch.no_grad():
            self.net[-1].weight.mul_(0.01)

    def forward(self, x):
        return torch.clamp(x + self.net(x), 0.0, 1.0)


class IdentityFusionDecoder(nn.Module):
    """Pass-through decoder stub for tests."""

    def forward(self, x):
        return x


def fuse(reenacted, target, mask_b: Mask, d_delta: nn.Module | None = None,
         extractor: PerceptualExtractor | None = None) -> FaceFrame:
    """Swapped face: mask * d_delta(madain(d, y, m)) + (1 - mask) * y.

    Background pixels (mask weight exactly 0) equal the target bit-exactly.
    """
    if mask_b.kind != "blurred":
        raise ValidationError("fuse expects a blurred mask")
    d = _as_image_batch(reenacted, dtype=torch.float64)[0]
    y = _as_image_batch(target, dtype=torch.float64)[0]
    if d.shape != y.shape:
        raise ShapeMismatchError("reenacted and target must share a shape")
    m = torch.as_tensor(np.array(mask_b.values), dtype=torch.float64)
    matched = _madain_tensor(d, y, m)
    if d_delta is not None:
        dtype = next(d_delta.parameters(), torch.zeros((), dtype=torch.float64)).dtype
        with torch.no_grad():
            matched = d_delta(matched.unsqueeze(0).to(dtype))[0].to(torch.float64)
    out = torch.clamp(matched, 0.0, 1.0)
    zero = m == 0
    composite = m * out + (1.0 - m) * y
    composite[:, zero] = y[:, zero]  # bit-exact background
    identity = reenacted.identity if isinstance(reenacted, FaceFrame) else ""
    return tensor_to_frame(composite, identity=identity)


def feature_moments(feat: torch.Tensor) -> tuple:
    """Instance-norm statistics: per-channel spatial mean and std."""
    if feat.dim() == 3:
        feat = feat.unsqueeze(0)
    b, c = feat.shape[:2]
    flat = feat.reshape(b, c, -1)
    mean = flat.mean(dim=2)
    var = torch.clamp((flat * flat).mean(dim=2) - mean * mean, min=0.0)
    # the epsilon keeps the sqrt differentiable when a feature map is constant
    # (e.g. a 1x1 deepest stage), where the variance is exactly zero
    return mean, torch.sqrt(var + 1e-12)


def madain_loss(output, content_ref, style_ref, mask_b: Mask,
                extractor: PerceptualExtractor) -> tuple:
    """(content loss, style loss) on mask-weighted images.

    Content: whole-tensor Euclidean distance between masked output and masked
    content. Style: sum over extractor layers of the Euclidean distances
    between per-channel feature means and stds, equal layer weights.
    """
    o = _as_image_batch(output)
    c = _as_image_batch(content_ref, dtype=o.dtype)
    s = _as_image_batch(style_ref, dtype=o.dtype)
    if not (o.shape == c.shape == s.shape):
        raise ShapeMismatchError("output/content/style must share a shape")
    m = torch.as_tensor(np.array(mask_b.values), dtype=o.dtype)
    om, cm, sm = o * m, c * m, s * m
    l_content = torch.linalg.vector_norm(om - cm)
    l_style = om.new_zeros(())
    feats_o = extractor(om)
    feats_s = extractor(sm)
    for i, (fo, fs) in enumerate(zip(feats_o, feats_s)):
        mu_o, sd_o = feature_moments(fo)
        mu_s, sd_s = feature_moments(fs)
        l_style = l_style + torch.linalg.vector_norm(mu_o - mu_s) + torch.linalg.vector_norm(sd_o - sd_s)
    return l_content, l_style
