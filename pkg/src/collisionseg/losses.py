"""Weakly-supervised training objective.

Three components over a batch of B image/audio pairs: an image-level
contrastive loss on re-encoded masked images, a feature-level contrastive
loss on mask-pooled patch features for all B*B pairings, and an L1 area
regulariser pulling the positive masks toward an expected region size.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from collisionseg.encoders import EncoderBundle


@dataclass(frozen=True)
class LossWeights:
    lambda_i: float = 1.0
    lambda_f: float = 1.0
    lambda_r: float = 1.0
    p_plus: float = 0.1

    def __post_init__(self) -> None:
        if min(self.lambda_i, self.lambda_f, self.lambda_r) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 < self.p_plus < 1.0:
            raise ValueError(f"p_plus must lie in (0, 1), got {self.p_plus}")


class ContrastiveTemperature(nn.Module):
    """Softmax temperature, optionally learnable, clamped to [0.01, 0.5]."""

    def __init__(self, init: float = 0.07, learnable: bool = True):
        super().__init__()
        raw = torch.tensor(float(init)).log()
        if learnable:
            self.raw = nn.Parameter(raw)
        else:
            self.register_buffer("raw", raw)

    def value(self) -> Tensor:
        return self.raw.exp().clamp(0.01, 0.5)


def infonce_terms(sim: Tensor, tau) -> tuple[Tensor, Tensor]:
    """Row- and column-softmax diagonal losses of a square similarity matrix."""
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError(f"similarity matrix must be square, got {tuple(sim.shape)}")
    if not torch.isfinite(sim).all():
        raise FloatingPointError("similarity matrix contains non-finite values")
    logits = sim / tau
    row = -torch.diagonal(F.log_softmax(logits, dim=1)).mean()
    col = -torch.diagonal(F.log_softmax(logits, dim=0)).mean()
    return row, col


def infonce(sim: Tensor, tau) -> Tensor:
    """Symmetric contrastive loss: row term plus column term."""
    row, col = infonce_terms(sim, tau)
    return row + col


def gumbel_binarize(
    masks: Tensor,
    temperature: float = 0.5,
    generator: torch.Generator | None = None,
    hard: bool = True,
    noise: Tensor | None = None,
) -> Tensor:
    """Stochastic per-pixel binarisation with a straight-through gradient.

    Treats each pixel value as the on-probability of a two-class choice.
    With hard=True the forward output is exactly {0,1} while the backward
    pass follows the soft relaxation; hard=False returns the relaxation
    itself (used where a differentiable surrogate is required end to end).
    """
    eps = 1e-6
    p = masks.clamp(eps, 1.0 - eps)
    logits = torch.stack([p.log(), (1.0 - p).log()], dim=-1)
    if noise is None:
        u = torch.rand(logits.shape, generator=generator, dtype=masks.dtype, device=masks.device)
        noise = -torch.log(-torch.log(u + eps) + eps)
    soft = torch.softmax((logits + noise) / temperature, dim=-1)[..., 0]
    if not hard:
        return soft
    hard_on = (soft >= 0.5).to(masks.dtype)
    return (hard_on - soft).detach() + soft


def image_level_loss(
    images: Tensor,
    audio_embeds: Tensor,
    diag_masks: Tensor,
    bundle: EncoderBundle,
    tau,
    gumbel_tau: float = 0.5,
    generator: torch.Generator | None = None,
    hard: bool = True,
    noise: Tensor | None = None,
) -> Tensor:
    """Contrastive loss on masked-image embeddings vs audio embeddings.

    Only the B positive masks are binarised and applied to their images,
    so exactly B visual-encoder passes happen per batch.  Passing an
    explicit noise tensor (and hard=False) makes the evaluation a fixed
    differentiable function, which numeric gradient checks need.
    """
    b = images.shape[0]
    if b < 2:
        raise ValueError("image-level loss needs a batch of at least 2 pairs")
    if diag_masks.shape[0] != b or audio_embeds.shape[0] != b:
        raise ValueError("images, masks, and audio embeddings must align")
    binarised = gumbel_binarize(diag_masks, gumbel_tau, generator=generator, hard=hard, noise=noise)
    masked = images * binarised.unsqueeze(1)
    _, masked_globals = bundle.visual(masked)
    sim = masked_globals @ audio_embeds.T
    return infonce(sim, tau)


def feature_level_loss(
    batch_masks: Tensor,
    feature_grids: Tensor,
    audio_embeds: Tensor,
    tau,
) -> Tensor:
    """Contrastive loss on mask-pooled patch features for all B*B pairings.

    batch_masks is (B, B, H, W) with entry (i, j) the mask of image i
    conditioned on audio j; it is area-downsampled to the feature grid.
    An all-zero mask falls back to the unweighted feature mean.
    """
    b, b2, mh, mw = batch_masks.shape
    if b != b2:
        raise ValueError(f"batch mask tensor must be square in the pair axes, got {b}x{b2}")
    _, d, h, w = feature_grids.shape
    m = batch_masks.reshape(b * b, 1, mh, mw)
    if (mh, mw) != (h, w):
        m = F.adaptive_avg_pool2d(m, (h, w))
    m = m.reshape(b, b, h * w)
    grids = feature_grids.reshape(b, d, h * w)
    weighted = torch.einsum("ijp,idp->ijd", m, grids)
    mass = m.sum(dim=-1, keepdim=True)
    mean_feat = grids.mean(dim=-1).unsqueeze(1).expand(b, b, d)
    pooled = torch.where(mass > 1e-8, weighted / mass.clamp_min(1e-8), mean_feat)
    pooled = F.normalize(pooled, dim=-1, eps=1e-8)
    sim = torch.einsum("ijd,jd->ij", pooled, audio_embeds)
    return infonce(sim, tau)


def area_loss(diag_masks: Tensor, p_plus: float) -> Tensor:
    """Sum over samples of |mean activation - expected region size|."""
    return (diag_masks.mean(dim=(-1, -2)) - p_plus).abs().sum()


def total_loss(
    image_term: Tensor,
    feature_term: Tensor,
    area_term: Tensor,
    weights: LossWeights,
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum plus a per-component breakdown for the training log."""
    total = (
        weights.lambda_i * image_term
        + weights.lambda_f * feature_term
        + weights.lambda_r * area_term
    )
    breakdown = {
        "image": float(image_term.detach()),
        "feature": float(feature_term.detach()),
        "area": float(area_term.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
