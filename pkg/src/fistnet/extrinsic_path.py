"""Frozen style encoders, the gated fusion unit, and dual-path synthesis.

The extrinsic path fuses fixed feature extractors instead of training its
own: each encoder is a small frozen conv stack standing in for a pre-trained
stylization network. An input image is encoded, pushed through the mapping
network, gated by a two-branch fusion unit, and the resulting per-domain
feature conditions the ModRes residuals of its layer range. Structure
features drive the coarse (low-resolution) half of the synthesis stack,
color features the fine half.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ValidationError
from .generator_core import (
    LEAKY_SLOPE, GeneratorModel, LayerwiseLatent, StyleWeightVector,
    map_latent, seed_module, synthesize_intrinsic,
)
from .image_pipeline import validate_image

ENCODER_WIDTHS = (16, 32, 64, 128)


class SurrogateEncoder(nn.Module):
    """Frozen seeded conv stack: image -> style code.

    Four stride-2 convolutions, global average pooling, and an affine
    projection to the latent dimension. Weights are drawn once from a
    seeded Gaussian and never trained; the same seed always reproduces the
    same encoder.
    """

    def __init__(self, d_latent: int, seed: int, identity_tag: str = "style"):
        super().__init__()
        self.d_latent = d_latent
        self.seed = seed
        self.identity_tag = identity_tag
        layers = []
        in_ch = 3
        for width in ENCODER_WIDTHS:
            layers.append(nn.Conv2d(in_ch, width, 3, stride=2, padding=1))
            in_ch = width
        self.convs = nn.ModuleList(layers)
        self.project = nn.Linear(in_ch, d_latent)
        seed_module(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        x = img
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        x = x.mean(dim=(-2, -1))
        return self.project(x)


def encode(enc: SurrogateEncoder, img: torch.Tensor) -> torch.Tensor:
    """Run a frozen encoder on a single image or a batch."""
    squeeze = img.ndim == 3
    batch = img.unsqueeze(0) if squeeze else img
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ValidationError(
            f"encoder expects (3, H, W) or (B, 3, H, W), got {tuple(img.shape)}")
    for sample in batch:
        validate_image(sample)
    code = enc(batch)
    return code.squeeze(0) if squeeze else code


class GatedMappingUnit(nn.Module):
    """Two-branch gated fusion: F_d = gamma * branch0(F_t) + (1 - gamma) * branch1(F_t)."""

    def __init__(self, d_latent: int, gamma: float):
        super().__init__()
        if not 0.0 <= gamma <= 1.0:
            raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
        self.d_latent = d_latent
        self.gamma = float(gamma)
        self.branch0 = nn.Linear(d_latent, d_latent)
        self.branch1 = nn.Linear(d_latent, d_latent)


def gmu_forward(gmu: GatedMappingUnit, f_t: torch.Tensor) -> torch.Tensor:
    """Convex combination of the two branch outputs, gated by gamma.

    The endpoints dispatch to a single branch so that gamma = 1 and
    gamma = 0 reproduce that branch's output bitwise (the dichotomous
    operating mode).
    """
    if f_t.shape[-1] != gmu.d_latent:
        raise ValidationError(
            f"feature has dimension {f_t.shape[-1]}, unit expects {gmu.d_latent}")
    if not 0.0 <= gmu.gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gmu.gamma}")
    if gmu.gamma == 1.0:
        return gmu.branch0(f_t)
    if gmu.gamma == 0.0:
        return gmu.branch1(f_t)
    return gmu.gamma * gmu.branch0(f_t) + (1.0 - gmu.gamma) * gmu.branch1(f_t)


@dataclass
class ExtrinsicStyleCode:
    """Per-layer residual style codes with the coarse/fine boundary recorded.

    Rows below ``split_index`` (coarse layers) carry the structure feature;
    rows at or above it (fine layers) carry the color feature.
    """

    per_layer: torch.Tensor
    split_index: int

    def __post_init__(self):
        if self.per_layer.ndim not in (2, 3):
            raise ValidationError("per_layer must be (L, d) or (B, L, d)")
        if not 1 <= self.split_index <= self.per_layer.shape[-2]:
            raise ValidationError(
                f"split_index {self.split_index} outside 1..{self.per_layer.shape[-2]}")

    @property
    def num_layers(self) -> int:
        return self.per_layer.shape[-2]

    @classmethod
    def assemble(cls, f_structure: torch.Tensor, f_color: torch.Tensor,
                 num_layers: int, split_index: int | None = None) -> "ExtrinsicStyleCode":
        """Structure feature on the coarse half, color feature on the fine half."""
        if f_structure.shape != f_color.shape:
            raise ValidationError("structure and color features must share shape")
        split = num_layers // 2 if split_index is None else split_index
        rows = [f_structure if k < split else f_color for k in range(num_layers)]
        return cls(per_layer=torch.stack(rows, dim=-2), split_index=split)


@dataclass
class StylePipeline:
    """Everything needed for dual-path inference, built from one config."""

    gen: GeneratorModel
    enc_backbone: SurrogateEncoder
    enc_color: SurrogateEncoder
    enc_structure: SurrogateEncoder
    gmu_color: GatedMappingUnit
    gmu_structure: GatedMappingUnit

    def trainable_extrinsic_parameters(self):
        yield from self.gen.extrinsic_parameters()
        yield from self.gmu_color.parameters()
        yield from self.gmu_structure.parameters()


def build_pipeline(config, role_tag: str = "transfer") -> StylePipeline:
    from .generator_core import build_generator

    gen = build_generator(config, role_tag=role_tag)
    gmu_color = seed_module(
        GatedMappingUnit(config.d_latent, config.gamma1), config.seed + 11)
    gmu_structure = seed_module(
        GatedMappingUnit(config.d_latent, config.gamma2), config.seed + 12)
    return StylePipeline(
        gen=gen,
        enc_backbone=SurrogateEncoder(config.d_latent, config.encoder_sg_seed, "backbone"),
        enc_color=SurrogateEncoder(config.d_latent, config.encoder1_seed, "color"),
        enc_structure=SurrogateEncoder(config.d_latent, config.encoder2_seed, "structure"),
        gmu_color=gmu_color,
        gmu_structure=gmu_structure,
    )


def extrinsic_codes(gen: GeneratorModel, enc1: SurrogateEncoder,
                    enc2: SurrogateEncoder, gmu1: GatedMappingUnit,
                    gmu2: GatedMappingUnit, img: torch.Tensor) -> ExtrinsicStyleCode:
    """Encoder -> mapping -> gated fusion, for both domains, assembled per layer."""
    f_color = gmu_forward(gmu1, map_latent(gen.mapping, encode(enc1, img)))
    f_structure = gmu_forward(gmu2, map_latent(gen.mapping, encode(enc2, img)))
    return ExtrinsicStyleCode.assemble(f_structure, f_color, gen.num_layers)


def synthesize_full(gen: GeneratorModel, enc1: SurrogateEncoder,
                    enc2: SurrogateEncoder, gmu1: GatedMappingUnit,
                    gmu2: GatedMappingUnit,
                    img_or_latent: torch.Tensor | LayerwiseLatent,
                    weights, *, enc_sg: SurrogateEncoder | None = None,
                    ) -> torch.Tensor:
    """Dual-path synthesis: intrinsic pass plus weighted ModRes residuals.

    An image input is lifted to the intrinsic latent through the backbone
    encoder and the mapping network; a latent input is used directly, with
    its own intrinsic render feeding the style encoders. A zero weight
    vector reproduces the intrinsic output exactly.
    """
    w = StyleWeightVector.from_any(weights, gen.num_layers)

    if isinstance(img_or_latent, LayerwiseLatent):
        intrinsic = img_or_latent
        if bool((w.values == 0).all()):
            return synthesize_intrinsic(gen, intrinsic)
        source = synthesize_intrinsic(gen, intrinsic).detach().clamp(-1.0, 1.0)
    elif isinstance(img_or_latent, torch.Tensor):
        if enc_sg is None:
            raise ValidationError("image input needs the backbone encoder (enc_sg)")
        source = img_or_latent
        code = map_latent(gen.mapping, encode(enc_sg, source))
        intrinsic = LayerwiseLatent.broadcast(code, gen.num_layers)
        if bool((w.values == 0).all()):
            return synthesize_intrinsic(gen, intrinsic)
    else:
        raise ValidationError(
            f"expected an image tensor or a layerwise latent, got {type(img_or_latent).__name__}")

    codes = extrinsic_codes(gen, enc1, enc2, gmu1, gmu2, source)
    img, _ = gen.run_synthesis(intrinsic, residual_codes=codes.per_layer, weights=w)
    return img


def pipeline_synthesize(pipe: StylePipeline,
                        img_or_latent: torch.Tensor | LayerwiseLatent,
                        weights) -> torch.Tensor:
    return synthesize_full(
        pipe.gen, pipe.enc_color, pipe.enc_structure, pipe.gmu_color,
        pipe.gmu_structure, img_or_latent, weights, enc_sg=pipe.enc_backbone)
