"""Training losses for both fine-tuning paths, plus the discriminator.

Sign conventions: ``adversarial_loss`` returns the saturating min-max
objective split into the generator-side expectation and the full objective.
The generator descends the first; the discriminator ascends the second
(equivalently, descends its negation). Probabilities are clamped away from
{0, 1} before the logs so a confident discriminator cannot produce infs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ValidationError
from .generator_core import (
    LEAKY_SLOPE, GeneratorModel, LayerwiseLatent, block_activations,
    seed_module,
)

PROB_EPS = 1e-7
CONTEXTUAL_BANDWIDTH = 0.5


class Discriminator(nn.Module):
    """Four stride-2 convs, global pool, sigmoid head: image -> realness in (0,1)."""

    def __init__(self, seed: int = 0):
        super().__init__()
        widths = (16, 32, 64, 64)
        layers = []
        in_ch = 3
        for w in widths:
            layers.append(nn.Conv2d(in_ch, w, 3, stride=2, padding=1))
            in_ch = w
        self.convs = nn.ModuleList(layers)
        self.head = nn.Linear(in_ch, 1)
        seed_module(self, seed)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        squeeze = img.ndim == 3
        x = img.unsqueeze(0) if squeeze else img
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        x = x.mean(dim=(-2, -1))
        p = torch.sigmoid(self.head(x)).squeeze(-1)
        return p.squeeze(0) if squeeze else p


@dataclass
class StructuralLossConfig:
    """How many coarse blocks the base/transfer comparison covers."""

    num_blocks: int = 2

    def __post_init__(self):
        if self.num_blocks < 1:
            raise ValidationError("num_blocks must be at least 1")


class PerceptualFeatureNet(nn.Module):
    """Frozen seeded conv stack exposing three feature scales."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed
        self.conv1 = nn.Conv2d(3, 8, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        seed_module(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def features(self, img: torch.Tensor) -> list[torch.Tensor]:
        squeeze = img.ndim == 3
        x = img.unsqueeze(0) if squeeze else img
        outs = []
        for conv in (self.conv1, self.conv2, self.conv3):
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
            outs.append(x.squeeze(0) if squeeze else x)
        return outs


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


# ---------------------------------------------------------------------------
# Structural
# ---------------------------------------------------------------------------

def structural_loss(base: GeneratorModel, transfer: GeneratorModel,
                    latent: LayerwiseLatent, cfg: StructuralLossConfig,
                    ) -> torch.Tensor:
    """Mean over the first K blocks of elementwise MSE between activations."""
    if (base.num_layers != transfer.num_layers
            or base.resolutions != transfer.resolutions
            or base.channels != transfer.channels):
        raise ValidationError("base and transfer generators differ in architecture")
    k = cfg.num_blocks
    if k > base.num_layers:
        raise ValidationError(
            f"num_blocks {k} exceeds generator layer count {base.num_layers}")
    acts_base = block_activations(base, latent, k)
    acts_transfer = block_activations(transfer, latent, k)
    total = sum(F.mse_loss(t, b.detach()) for b, t in zip(acts_base, acts_transfer))
    return total / k


# ---------------------------------------------------------------------------
# Adversarial
# ---------------------------------------------------------------------------

def adversarial_loss(disc: nn.Module, fake: torch.Tensor, real: torch.Tensor,
                     ) -> tuple[torch.Tensor, torch.Tensor]:
    """Saturating min-max objective, split as (generator term, full objective).

    gen_term  = E[log(1 - D(fake))]          (the generator descends this)
    disc_term = gen_term + E[log D(real)]    (the discriminator ascends this)
    """
    if fake.numel() == 0 or real.numel() == 0:
        raise ValidationError("adversarial loss needs non-empty batches")
    p_fake = disc(fake).clamp(PROB_EPS, 1.0 - PROB_EPS)
    p_real = disc(real).clamp(PROB_EPS, 1.0 - PROB_EPS)
    gen_term = torch.log(1.0 - p_fake).mean()
    disc_term = gen_term + torch.log(p_real).mean()
    return gen_term, disc_term


def non_saturating_gen_loss(disc: nn.Module, fake: torch.Tensor) -> torch.Tensor:
    """-E[log D(fake)]: the alternative generator loss when training stalls."""
    p_fake = disc(fake).clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -torch.log(p_fake).mean()


# ---------------------------------------------------------------------------
# Perceptual / content / style
# ---------------------------------------------------------------------------

def perceptual_loss(net: PerceptualFeatureNet, a: torch.Tensor,
                    b: torch.Tensor) -> torch.Tensor:
    """Sum over the three scales of feature MSE."""
    _check_same_shape(a, b)
    fa, fb = net.features(a), net.features(b)
    return sum(F.mse_loss(x, y) for x, y in zip(fa, fb))


def content_loss(net: PerceptualFeatureNet, out: torch.Tensor,
                 source: torch.Tensor) -> torch.Tensor:
    """Deepest-scale feature MSE against the source portrait."""
    _check_same_shape(out, source)
    return F.mse_loss(net.features(out)[-1], net.features(source)[-1])


def _moment_stats(feat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-channel spatial mean and population std, batch dims kept."""
    mean = feat.mean(dim=(-2, -1))
    std = feat.std(dim=(-2, -1), unbiased=False)
    return mean, std


def contextual_term(feat_a: torch.Tensor, feat_b: torch.Tensor,
                    bandwidth: float = CONTEXTUAL_BANDWIDTH) -> torch.Tensor:
    """Negative log mean best-match affinity between normalized feature patches.

    Each spatial position is a patch (its channel vector). Affinity is the
    Gaussian of the distance between L2-normalized patches,
    exp(-||p - q||^2 / (2h)); a patch matched against itself has distance 0
    and affinity exactly 1, so the term is exactly 0 when the feature maps
    coincide.
    """
    if feat_a.shape != feat_b.shape:
        raise ValidationError("contextual term needs equal feature shapes")
    a = feat_a.unsqueeze(0) if feat_a.ndim == 3 else feat_a
    b = feat_b.unsqueeze(0) if feat_b.ndim == 3 else feat_b
    B, C = a.shape[0], a.shape[1]
    pa = a.reshape(B, C, -1).transpose(1, 2)    # (B, N, C)
    pb = b.reshape(B, C, -1).transpose(1, 2)
    pa = pa / (pa.norm(dim=-1, keepdim=True) + 1e-12)
    pb = pb / (pb.norm(dim=-1, keepdim=True) + 1e-12)
    # explicit difference form: identical patches give a distance of exactly
    # zero (a dot-product rewrite would not), and there is no sqrt to blow
    # up the backward pass at zero
    d2 = (pa.unsqueeze(2) - pb.unsqueeze(1)).pow(2).sum(-1)   # (B, N, N)
    affinity = torch.exp(-d2 / (2.0 * bandwidth))
    best = affinity.max(dim=-1).values          # best match per source patch
    return -torch.log(best.mean(dim=-1)).mean()


def style_loss(net: PerceptualFeatureNet, out: torch.Tensor,
               style_ref: torch.Tensor) -> torch.Tensor:
    """Feature-matching statistics across scales plus a deepest-scale contextual term."""
    _check_same_shape(out, style_ref)
    f_out, f_ref = net.features(out), net.features(style_ref)
    matching = out.new_zeros(())
    for x, y in zip(f_out, f_ref):
        mx, sx = _moment_stats(x)
        my, sy = _moment_stats(y)
        matching = matching + F.mse_loss(mx, my) + F.mse_loss(sx, sy)
    return matching + contextual_term(f_out[-1], f_ref[-1])


# ---------------------------------------------------------------------------
# ModRes regularizer
# ---------------------------------------------------------------------------

def modres_l2(gen: GeneratorModel) -> torch.Tensor:
    """Sum of squared ModRes conv parameters; zero iff every residual filter is zero."""
    params = [t for block in gen.modres for t in block.conv_weights()]
    total = params[0].new_zeros(())
    for t in params:
        total = total + (t ** 2).sum()
    return total
