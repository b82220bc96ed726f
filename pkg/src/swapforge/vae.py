"""Disentangled VAE core: structure encoder, appearance encoder, decoder,
reparameterized sampling, reconstruction/KL losses, and latent-swap
reenactment.

The structure posterior is computed from a landmark heatmap stack and the
appearance posterior from an unpaired frame of the same identity; the decoder
consumes the concatenated latents. Inference uses posterior means (no
sampling) so outputs are deterministic.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import DomainError, PairingError, ShapeMismatchError, ValidationError
from .heatmap import HeatmapStack
from .media import FaceFrame

CHECKPOINT_VERSION = "swapforge-bundle.v1"

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 7


# ---------------------------------------------------------------------------
# tensor plumbing


def frame_to_tensor(frame, dtype=torch.float32) -> torch.Tensor:
    """FaceFrame (or HxWx3 array) -> (3, H, W) tensor."""
    if isinstance(frame, FaceFrame):
        arr = np.asarray(frame.pixels)
    else:
        arr = np.asarray(frame)
    if isinstance(arr, np.ndarray) and arr.ndim == 3 and arr.shape[2] == 3:
        arr = np.moveaxis(arr, 2, 0)
    return torch.as_tensor(np.array(arr), dtype=dtype)


def tensor_to_frame(t: torch.Tensor, identity: str = "", frame_index: int = 0,
                    landmarks=None) -> FaceFrame:
    arr = t.detach().cpu().numpy()
    if arr.ndim == 4:
        arr = arr[0]
    arr = np.moveaxis(arr, 0, 2)
    return FaceFrame(pixels=np.clip(arr, 0.0, 1.0), identity=identity,
                     frame_index=frame_index, landmarks=landmarks)


def heatmap_to_tensor(hm: HeatmapStack, dtype=torch.float32) -> torch.Tensor:
    return torch.as_tensor(np.array(hm.channels), dtype=dtype)


def _as_image_batch(x, dtype=None) -> torch.Tensor:
    """Accept FaceFrame / HxWx3 / CxHxW / BxCxHxW and return BxCxHxW."""
    if isinstance(x, FaceFrame):
        x = frame_to_tensor(x, dtype=dtype or torch.float32)
    elif not torch.is_tensor(x):
        x = frame_to_tensor(np.asarray(x), dtype=dtype or torch.float32)
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if dtype is not None:
        x = x.to(dtype)
    return x


# ---------------------------------------------------------------------------
# losses


def reparameterize(mu, sigma, eps):
    """z = mu + sigma * eps (the differentiable sampling path)."""
    mu, sigma, eps = (torch.as_tensor(v) for v in (mu, sigma, eps))
    if mu.shape != sigma.shape or mu.shape != eps.shape:
        raise ShapeMismatchError(
            f"mu/sigma/eps shapes differ: {tuple(mu.shape)} {tuple(sigma.shape)} {tuple(eps.shape)}"
        )
    return mu + sigma * eps


def kl_loss(mu, sigma):
    """Non-negative KL(N(mu, sigma^2) || N(0, I)) = 0.5 * sum(mu^2 + s^2 - 1 - log s^2).

    Zero iff (mu, sigma) == (0, 1).
    """
    mu = torch.as_tensor(mu)
    sigma = torch.as_tensor(sigma)
    if mu.shape != sigma.shape:
        raise ShapeMismatchError("mu and sigma must share a shape")
    if (sigma <= 0).any():
        raise DomainError("sigma must be positive")
    return 0.5 * torch.sum(mu * mu + sigma * sigma - 1.0 - torch.log(sigma * sigma))


def pixel_loss(a, b):
    """Mean absolute error over all C*H*W elements."""
    a = _as_image_batch(a)
    b = _as_image_batch(b, dtype=a.dtype)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean(torch.abs(a - b))


def ssim(a, b, window: int = SSIM_WINDOW, c1: float = SSIM_C1, c2: float = SSIM_C2):
    """Mean local SSIM over valid window positions (uniform window)."""
    a = _as_image_batch(a)
    b = _as_image_batch(b, dtype=a.dtype)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    h, w = a.shape[-2:]
    if window > min(h, w):
        raise DomainError(f"window {window} exceeds image size {h}x{w}")

    def mean(x):
        return F.avg_pool2d(x, window, stride=1)

    mu_a = mean(a)
    mu_b = mean(b)
    var_a = mean(a * a) - mu_a * mu_a
    var_b = mean(b * b) - mu_b * mu_b
    cov = mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return torch.mean(num / den)


def ssim_loss(a, b, window: int = SSIM_WINDOW, c1: float = SSIM_C1, c2: float = SSIM_C2):
    """1 - mean SSIM; in [0, 2] and 0 iff a == b."""
    return 1.0 - ssim(a, b, window=window, c1=c1, c2=c2)


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class BundleConfig:
    image_size: int = 64
    heatmap_channels: int = 68
    latent_dim: int = 128  # per role
    enc_widths: tuple = (32, 64)
    dec_widths: tuple = (64, 32)
    structure_from_heatmap: bool = True

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "heatmap_channels": self.heatmap_channels,
            "latent_dim": self.latent_dim,
            "enc_widths": list(self.enc_widths),
            "dec_widths": list(self.dec_widths),
            "structure_from_heatmap": self.structure_from_heatmap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BundleConfig":
        return cls(
            image_size=int(d["image_size"]),
            heatmap_channels=int(d["heatmap_channels"]),
            latent_dim=int(d["latent_dim"]),
            enc_widths=tuple(d["enc_widths"]),
            dec_widths=tuple(d["dec_widths"]),
            structure_from_heatmap=bool(d["structure_from_heatmap"]),
        )


@dataclass(frozen=True)
class LatentCode:
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray
    role: str  # structure | appearance

    def __post_init__(self):
        if self.role not in ("structure", "appearance"):
            raise ValidationError(f"bad latent role {self.role!r}")
        if (np.asarray(self.sigma) <= 0).any():
            raise DomainError("latent sigma must be positive elementwise")


class GaussianEncoder(nn.Module):
    """Strided conv stack -> (mu, sigma) of a diagonal Gaussian posterior."""

    def __init__(self, in_channels: int, widths, latent_dim: int, image_size: int):
        super().__init__()
        layers = []
        ch = in_channels
        size = image_size
        for w in widths:
            layers += [nn.Conv2d(ch, w, 3, stride=2, padding=1), nn.LeakyReLU(0.2)]
            ch = w
            size = (size + 1) // 2
        self.conv = nn.Sequential(*layers)
        self.head = nn.Linear(ch * size * size, 2 * latent_dim)
        self.latent_dim = latent_dim

    def forward(self, x):
        h = self.conv(x)
        h = h.flatten(1)
        out = self.head(h)
        mu, log_var = out.chunk(2, dim=1)
        sigma = torch.exp(0.5 * log_var.clamp(-12.0, 8.0))
        return mu, sigma


class ImageDecoder(nn.Module):
    """Latent vector -> image in [0, 1] via transpose convs + sigmoid."""

    def __init__(self, latent_dim: int, widths, image_size: int, out_channels: int = 3):
        super().__init__()
        n_up = len(widths)
        self.base = image_size // (2 ** n_up)
        self.ch0 = widths[0]
        self.fc = nn.Linear(latent_dim, self.ch0 * self.base * self.base)
        ups = []
        ch = self.ch0
        for w in widths[1:]:
            ups += [nn.ConvTranspose2d(ch, w, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            ch = w
        ups += [nn.ConvTranspose2d(ch, ch, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
        self.up = nn.Sequential(*ups)
        self.out = nn.Conv2d(ch, out_channels, 3, padding=1)

    def forward(self, z):
        h = self.fc(z).view(-1, self.ch0, self.base, self.base)
        h = self.up(h)
        return torch.sigmoid(self.out(h))


class EncoderDecoderBundle(nn.Module):
    """Structure encoder + appearance encoder + decoder, one parameter set."""

    def __init__(self, config: BundleConfig | None = None):
        super().__init__()
        self.config = config or BundleConfig()
        c = self.config
        struct_in = c.heatmap_channels if c.structure_from_heatmap else 3
        self.e_alpha = GaussianEncoder(struct_in, c.enc_widths, c.latent_dim, c.image_size)
        self.e_beta = GaussianEncoder(3, c.enc_widths, c.latent_dim, c.image_size)
        self.d_gamma = ImageDecoder(2 * c.latent_dim, c.dec_widths, c.image_size)

    def parameter_vector(self) -> np.ndarray:
        return nn.utils.parameters_to_vector(self.parameters()).detach().cpu().numpy()

    def load_parameter_vector(self, vec: np.ndarray):
        t = torch.as_tensor(vec, dtype=next(self.parameters()).dtype)
        nn.utils.vector_to_parameters(t, self.parameters())

    def structure_posterior(self, heatmap):
        if isinstance(heatmap, HeatmapStack):
            heatmap = heatmap_to_tensor(heatmap, dtype=next(self.parameters()).dtype)
        if heatmap.dim() == 3:
            heatmap = heatmap.unsqueeze(0)
        return self.e_alpha(heatmap)

    def appearance_posterior(self, frame):
        x = _as_image_batch(frame, dtype=next(self.parameters()).dtype)
        return self.e_beta(x)

    def decode(self, z_structure, z_appearance):
        return self.d_gamma(torch.cat([z_structure, z_appearance], dim=1))


def _latent_code(mu, sigma, z, role) -> LatentCode:
    return LatentCode(
        mu=mu.detach().cpu().numpy()[0],
        sigma=sigma.detach().cpu().numpy()[0],
        z=z.detach().cpu().numpy()[0],
        role=role,
    )


def reconstruct(frame: FaceFrame, unpaired: FaceFrame, heatmap: HeatmapStack,
                bundle: EncoderDecoderBundle, generator: torch.Generator | None = None):
    """Reconstruct ``frame`` from its heatmap and an unpaired same-identity frame.

    Returns (reconstructed FaceFrame, structure LatentCode, appearance LatentCode).
    """
    if frame.identity != unpaired.identity:
        raise PairingError(
            f"unpaired frame identity {unpaired.identity!r} != {frame.identity!r}"
        )
    mu_s, sig_s = bundle.structure_posterior(heatmap)
    mu_a, sig_a = bundle.appearance_posterior(unpaired)
    eps_s = torch.randn(mu_s.shape, generator=generator, dtype=mu_s.dtype)
    eps_a = torch.randn(mu_a.shape, generator=generator, dtype=mu_a.dtype)
    z_s = reparameterize(mu_s, sig_s, eps_s)
    z_a = reparameterize(mu_a, sig_a, eps_a)
    out = bundle.decode(z_s, z_a)
    return (
        tensor_to_frame(out, identity=frame.identity, frame_index=frame.frame_index),
        _latent_code(mu_s, sig_s, z_s, "structure"),
        _latent_code(mu_a, sig_a, z_a, "appearance"),
    )


def reenact(source_appearance: FaceFrame, target_heatmap: HeatmapStack,
            bundle: EncoderDecoderBundle) -> FaceFrame:
    """Animate the source identity with the target's structure.

    Inference path: posterior means only, no sampling, hence deterministic.
    """
    with torch.no_grad():
        mu_s, _ = bundle.structure_posterior(target_heatmap)
        mu_a, _ = bundle.appearance_posterior(source_appearance)
        out = bundle.decode(mu_s, mu_a)
    return tensor_to_frame(out, identity=source_appearance.identity)


# ---------------------------------------------------------------------------
# checkpointing


def save_bundle(bundle: EncoderDecoderBundle, path: str):
    """Version-tagged archive: flat parameter vector + architecture config."""
    params = bundle.parameter_vector().astype(np.float64)
    buf = io.BytesIO()
    np.save(buf, params)
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr("version.txt", CHECKPOINT_VERSION)
        zf.writestr("config.json", json.dumps(bundle.config.to_dict()))
        zf.writestr("params.npy", buf.getvalue())


def load_bundle(path: str) -> EncoderDecoderBundle:
    with zipfile.ZipFile(path) as zf:
        version = zf.read("version.txt").decode()
        if version != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {version!r}")
        config = BundleConfig.from_dict(json.loads(zf.read("config.json").decode()))
        params = np.load(io.BytesIO(zf.read("params.npy")))
    bundle = EncoderDecoderBundle(config)
    bundle.load_parameter_vector(params)
    return bundle
