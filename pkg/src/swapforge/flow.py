"""Temporal-consistency constraint: optical flow on frame pairs and an L1
penalty on the difference between reconstructed-pair and original-pair flow.

The desk-scale fallback estimator is exhaustive block matching. It is not
differentiable, so training uses a soft-argmin variant for the reconstructed
side and treats the original-pair flow as a constant. Flow is only ever
compared, never used to warp frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import DomainError, ShapeMismatchError, ValidationError
from .media import FaceFrame
from .vae import _as_image_batch

DEFAULT_BLOCK = 8
DEFAULT_RADIUS = 4


@dataclass(frozen=True)
class FlowField:
    """2 x H x W displacement field (u, v) in pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValidationError(f"flow must be 2xHxW, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


class FlowEstimator:
    """Plug-in contract: (frame_t, frame_{t-1}) -> FlowField, deterministic."""

    def estimate(self, frame: FaceFrame, previous: FaceFrame) -> FlowField:
        raise NotImplementedError


def temporal_loss(flow_recon, flow_orig):
    """Mean absolute elementwise flow difference (C = 2)."""
    a = flow_recon.values if isinstance(flow_recon, FlowField) else flow_recon
    b = flow_orig.values if isinstance(flow_orig, FlowField) else flow_orig
    a = torch.as_tensor(np.array(a)) if not torch.is_tensor(a) else a
    b = torch.as_tensor(np.array(b), dtype=a.dtype) if not torch.is_tensor(b) else b.to(a.dtype)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"flow shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean(torch.abs(a - b))


def _to_gray(x: torch.Tensor) -> torch.Tensor:
    # (B,3,H,W) -> (B,1,H,W); luma weights
    w = torch.tensor([0.299, 0.587, 0.114], dtype=x.dtype).view(1, 3, 1, 1)
    return (x * w).sum(dim=1, keepdim=True)


def _candidate_sads(a: torch.Tensor, b: torch.Tensor, block: int, radius: int):
    """SAD of every a-block against b shifted by each candidate displacement.

    Returns (sads, candidates): sads is (n_cand, nby, nbx), candidates a list
    of (du, dv). b is replicate-padded so every candidate is valid everywhere.
    """
    _, _, h, w = a.shape
    if h % block or w % block:
        raise DomainError(f"block {block} must divide frame size {h}x{w}")
    if radius < 0:
        raise DomainError("radius must be >= 0")
    ga, gb = _to_gray(a), _to_gray(b)
    gb_pad = F.pad(gb, (radius, radius, radius, radius), mode="replicate")
    cands = [(du, dv) for dv in range(-radius, radius + 1) for du in range(-radius, radius + 1)]
    sads = []
    for du, dv in cands:
        shifted = gb_pad[:, :, radius + dv: radius + dv + h, radius + du: radius + du + w]
        diff = torch.abs(ga - shifted)
        blocksum = F.avg_pool2d(diff, block) * (block * block)
        sads.append(blocksum[:, 0])
    return torch.stack(sads), cands


def block_match_flow(a, b, block: int = DEFAULT_BLOCK, radius: int = DEFAULT_RADIUS) -> FlowField:
    """Exhaustive per-block integer displacement minimizing SAD.

    Ties break toward zero displacement, then lexicographic (du, dv).
    """
    ta = _as_image_batch(a, dtype=torch.float64)
    tb = _as_image_batch(b, dtype=torch.float64)
    if ta.shape != tb.shape:
        raise ShapeMismatchError("frames must share a shape")
    with torch.no_grad():
        sads, cands = _candidate_sads(ta, tb, block, radius)
    sads = sads[:, 0].numpy()  # n_cand x nby x nbx
    # order candidates: zero first, then lexicographic, so argmin tie-breaks right
    order = sorted(range(len(cands)), key=lambda i: (cands[i] != (0, 0), cands[i]))
    ordered = sads[order]
    best = np.argmin(ordered, axis=0)
    du = np.array([cands[order[i]][0] for i in range(len(cands))])[best]
    dv = np.array([cands[order[i]][1] for i in range(len(cands))])[best]
    h, w = ta.shape[-2:]
    flow = np.empty((2, h, w), dtype=np.float64)
    flow[0] = np.kron(du, np.ones((block, block)))
    flow[1] = np.kron(dv, np.ones((block, block)))
    return FlowField(values=flow)


def soft_block_match_flow(a, b, block: int = DEFAULT_BLOCK, radius: int = DEFAULT_RADIUS,
                          temperature: float = 0.05) -> torch.Tensor:
    """Differentiable soft-argmin block matching; returns a (2, H, W) tensor.

    The softmax over candidate displacements keeps gradients flowing into the
    frames, which the hard matcher cannot do.
    """
    ta = a if torch.is_tensor(a) else _as_image_batch(a)
    tb = b if torch.is_tensor(b) else _as_image_batch(b, dtype=ta.dtype)
    if ta.dim() == 3:
        ta = ta.unsqueeze(0)
    if tb.dim() == 3:
        tb = tb.unsqueeze(0)
    if ta.shape != tb.shape:
        raise ShapeMismatchError("frames must share a shape")
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    sads, cands = _candidate_sads(ta, tb, block, radius)  # n_cand x B x nby x nbx
    weights = torch.softmax(-sads / temperature, dim=0)
    du = torch.tensor([c[0] for c in cands], dtype=ta.dtype).view(-1, 1, 1, 1)
    dv = torch.tensor([c[1] for c in cands], dtype=ta.dtype).view(-1, 1, 1, 1)
    u = (weights * du).sum(dim=0)
    v = (weights * dv).sum(dim=0)
    flow_blocks = torch.stack([u, v], dim=1)  # B x 2 x nby x nbx
    flow = flow_blocks.repeat_interleave(block, dim=2).repeat_interleave(block, dim=3)
    return flow[0] if not torch.is_tensor(a) or (torch.is_tensor(a) and a.dim() == 3) else flow


class BlockMatchEstimator(FlowEstimator):
    def __init__(self, block: int = DEFAULT_BLOCK, radius: int = DEFAULT_RADIUS):
        self.block = block
        self.radius = radius

    def estimate(self, frame, previous) -> FlowField:
        return block_match_flow(frame, previous, self.block, self.radius)
