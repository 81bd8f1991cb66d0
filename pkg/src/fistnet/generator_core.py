"""StyleGAN-like synthesis stack with per-layer residual style injection.

Conventions used throughout:

* Latent codes are plain 1-D float tensors of length ``d_latent`` (batched
  variants carry a leading batch dimension).
* The mapping network's first layer is a pure affine map ``b + W z``; its
  weight matrix is the factorization target of the latent-semantics module.
  Deeper layers are affine followed by a leaky rectifier.
* Synthesis runs ``num_layers`` conv blocks whose resolutions follow the
  one-4x4-then-pairs doubling pattern (4, 8, 8, 16, 16, ...), ending in a
  1x1 to-RGB convolution with a tanh head, so outputs always lie in [-1, 1].
* Every block k owns a ModRes injection point: a residual branch
  (conv -> AdaIN -> activation -> conv) conditioned on a style code and
  scaled by the k-th entry of a style weight vector. Zero residual conv
  weights make the branch an exact identity, and a zero weight entry skips
  the branch entirely, so the weight-zero output is bit-identical to the
  intrinsic path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ValidationError

LEAKY_SLOPE = 0.2
ADAIN_EPS = 1e-8


# ---------------------------------------------------------------------------
# Initialization helpers
# ---------------------------------------------------------------------------

def _fan_in(weight: torch.Tensor) -> int:
    if weight.ndim == 2:           # linear: (out, in)
        return weight.shape[1]
    if weight.ndim == 4:           # conv: (out, in, kh, kw)
        return weight.shape[1] * weight.shape[2] * weight.shape[3]
    return weight.numel()


def seed_module(module: nn.Module, seed: int) -> nn.Module:
    """Deterministically initialize: unit Gaussian scaled by fan-in, zero biases."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in module.named_parameters():
            if name.endswith("bias"):
                param.zero_()
            else:
                std = 1.0 / math.sqrt(_fan_in(param))
                param.normal_(0.0, std, generator=gen)
    return module


def _as_batch(x: torch.Tensor, ndim: int) -> tuple[torch.Tensor, bool]:
    """Add a leading batch dim when ``x`` has ``ndim`` dims; report if added."""
    if x.ndim == ndim:
        return x.unsqueeze(0), True
    if x.ndim == ndim + 1:
        return x, False
    raise ValidationError(f"expected {ndim} or {ndim + 1} dims, got {x.ndim}")


# ---------------------------------------------------------------------------
# Latent containers
# ---------------------------------------------------------------------------

@dataclass
class LayerwiseLatent:
    """Per-layer style codes ("plus" form) with a coarse/fine boundary.

    ``per_layer`` has shape (L, d) or (B, L, d). Layers with 1-indexed
    position <= ``split_index`` come from the intrinsic code in a
    concatenated latent; layers above it come from the style code.
    """

    per_layer: torch.Tensor
    split_index: int

    def __post_init__(self):
        if self.per_layer.ndim not in (2, 3):
            raise ValidationError(
                f"per_layer must be (L, d) or (B, L, d), got {self.per_layer.ndim} dims")
        if not 1 <= self.split_index <= self.num_layers:
            raise ValidationError(
                f"split_index {self.split_index} outside 1..{self.num_layers}")
        if not torch.isfinite(self.per_layer).all():
            raise ValidationError("latent contains non-finite values")

    @property
    def num_layers(self) -> int:
        return self.per_layer.shape[-2]

    @property
    def d_latent(self) -> int:
        return self.per_layer.shape[-1]

    @property
    def batched(self) -> bool:
        return self.per_layer.ndim == 3

    @classmethod
    def broadcast(cls, code: torch.Tensor, num_layers: int) -> "LayerwiseLatent":
        """Repeat one mapped code across every synthesis layer."""
        if code.ndim == 1:
            per_layer = code.unsqueeze(0).expand(num_layers, -1)
        elif code.ndim == 2:
            per_layer = code.unsqueeze(1).expand(-1, num_layers, -1)
        else:
            raise ValidationError("code must be (d,) or (B, d)")
        return cls(per_layer=per_layer.contiguous(), split_index=num_layers)

    @classmethod
    def concat(cls, intrinsic_code: torch.Tensor, style_code: torch.Tensor,
               boundary: int, num_layers: int) -> "LayerwiseLatent":
        """Intrinsic code on layers 1..boundary, style code above."""
        if intrinsic_code.shape != style_code.shape:
            raise ValidationError("intrinsic and style codes must share shape")
        if not 1 <= boundary <= num_layers:
            raise ValidationError(f"boundary {boundary} outside 1..{num_layers}")
        rows = [intrinsic_code if k < boundary else style_code
                for k in range(num_layers)]
        return cls(per_layer=torch.stack(rows, dim=-2), split_index=boundary)


@dataclass
class StyleWeightVector:
    """Per-layer blend weights for the extrinsic residual contributions."""

    values: torch.Tensor

    def __post_init__(self):
        if not isinstance(self.values, torch.Tensor):
            self.values = torch.as_tensor(self.values, dtype=torch.float32)
        self.values = self.values.to(torch.float32).flatten()
        if self.values.numel() < 1:
            raise ValidationError("weight vector is empty")
        if not torch.isfinite(self.values).all():
            raise ValidationError("weight vector contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValidationError("weight entries must lie in [0, 1]")

    def __len__(self) -> int:
        return self.values.numel()

    @classmethod
    def zeros(cls, num_layers: int) -> "StyleWeightVector":
        return cls(torch.zeros(num_layers))

    @classmethod
    def ones(cls, num_layers: int) -> "StyleWeightVector":
        return cls(torch.ones(num_layers))

    @classmethod
    def from_any(cls, value, num_layers: int) -> "StyleWeightVector":
        """Scalar broadcast or length-checked sequence."""
        if isinstance(value, StyleWeightVector):
            vec = value
        elif isinstance(value, (int, float)):
            vec = cls(torch.full((num_layers,), float(value)))
        else:
            vec = cls(torch.as_tensor(value, dtype=torch.float32))
        if len(vec) != num_layers:
            raise ValidationError(
                f"weight vector has {len(vec)} entries, generator has {num_layers} layers")
        return vec


# ---------------------------------------------------------------------------
# Mapping network
# ---------------------------------------------------------------------------

class MappingNetwork(nn.Module):
    """Affine-first latent mapper: z -> b + W z, then depth-1 affine+leaky layers."""

    def __init__(self, d_latent: int, depth: int = 1):
        super().__init__()
        if depth < 1:
            raise ValidationError("mapping depth must be at least 1")
        self.d_latent = d_latent
        self.depth = depth
        self.first = nn.Linear(d_latent, d_latent)
        self.rest = nn.ModuleList(nn.Linear(d_latent, d_latent) for _ in range(depth - 1))

    @property
    def weight_matrix(self) -> torch.Tensor:
        """The first layer's matrix, the closed-form factorization target."""
        return self.first.weight

    @property
    def bias_vector(self) -> torch.Tensor:
        return self.first.bias

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.first(z)
        for layer in self.rest:
            h = F.leaky_relu(layer(h), LEAKY_SLOPE)
        return h


def map_latent(net: MappingNetwork, z: torch.Tensor) -> torch.Tensor:
    """Run the mapping network on a latent code (or batch of codes)."""
    if z.shape[-1] != net.d_latent:
        raise ValidationError(
            f"latent has dimension {z.shape[-1]}, mapping expects {net.d_latent}")
    if not torch.isfinite(z).all():
        raise ValidationError("latent contains non-finite values")
    return net(z)


# ---------------------------------------------------------------------------
# AdaIN
# ---------------------------------------------------------------------------

def _instance_normalize(x: torch.Tensor) -> torch.Tensor:
    """Zero-mean unit-std per channel over spatial dims (population std)."""
    mean = x.mean(dim=(-2, -1), keepdim=True)
    std = x.std(dim=(-2, -1), keepdim=True, unbiased=False)
    return (x - mean) / (std + ADAIN_EPS)


def adain(content: torch.Tensor, style_mean: torch.Tensor,
          style_std: torch.Tensor) -> torch.Tensor:
    """Renormalize each content channel to the requested mean and std."""
    content_b, squeeze = _as_batch(content, 3)
    channels = content_b.shape[1]
    style_mean = torch.as_tensor(style_mean, dtype=content_b.dtype)
    style_std = torch.as_tensor(style_std, dtype=content_b.dtype)
    for name, vec in (("style_mean", style_mean), ("style_std", style_std)):
        if vec.shape[-1] != channels:
            raise ValidationError(
                f"{name} has {vec.shape[-1]} entries for {channels} channels")
    if (style_std < 0).any():
        raise ValidationError("style_std must be non-negative")
    mean = style_mean.reshape(-1, channels, 1, 1)
    std = style_std.reshape(-1, channels, 1, 1)
    out = std * _instance_normalize(content_b) + mean
    return out.squeeze(0) if squeeze else out


class StyleAffine(nn.Module):
    """Predicts per-channel (scale, shift) modulation from a style code."""

    def __init__(self, d_latent: int, channels: int):
        super().__init__()
        self.affine = nn.Linear(d_latent, 2 * channels)
        self.channels = channels

    def forward(self, feature: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        params = self.affine(code)
        scale, shift = params.chunk(2, dim=-1)
        scale = scale.reshape(-1, self.channels, 1, 1)
        shift = shift.reshape(-1, self.channels, 1, 1)
        return (1.0 + scale) * _instance_normalize(feature) + shift


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

class SynthesisBlock(nn.Module):
    """One synthesis step: optional 2x upsample, conv3x3, AdaIN, leaky ReLU."""

    def __init__(self, in_channels: int, out_channels: int, d_latent: int,
                 upsample: bool):
        super().__init__()
        self.upsample = upsample
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.style = StyleAffine(d_latent, out_channels)

    def forward(self, x: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv(x)
        x = self.style(x, code)
        return F.leaky_relu(x, LEAKY_SLOPE)


class ModResBlock(nn.Module):
    """Modulative residual block: x + conv(act(AdaIN(conv(x), code))).

    Zero conv weights make the residual branch vanish, so the block is an
    exact identity; that is the color-transfer initialization contract.
    """

    def __init__(self, channels: int, d_latent: int, kernel: int = 3):
        super().__init__()
        if kernel not in (1, 3):
            raise ValidationError("modres kernel must be 1 or 3")
        pad = kernel // 2
        self.channels = channels
        self.kernel = kernel
        self.conv1 = nn.Conv2d(channels, channels, kernel, padding=pad)
        self.style_head = nn.Linear(d_latent, d_latent)
        self.style = StyleAffine(d_latent, channels)
        self.conv2 = nn.Conv2d(channels, channels, kernel, padding=pad)

    def residual(self, feature: torch.Tensor, code: torch.Tensor) -> torch.Tensor:
        h = self.conv1(feature)
        h = self.style(h, self.style_head(code))
        h = F.leaky_relu(h, LEAKY_SLOPE)
        return self.conv2(h)

    def conv_weights(self) -> list[torch.Tensor]:
        return [self.conv1.weight, self.conv1.bias,
                self.conv2.weight, self.conv2.bias]

    @torch.no_grad()
    def initialize_zero(self) -> None:
        """Zero residual filters: the block starts as an exact identity."""
        for t in self.conv_weights():
            t.zero_()
        self.style.affine.weight.zero_()
        self.style.affine.bias.zero_()

    @torch.no_grad()
    def initialize_identity(self) -> None:
        """Center-tap identity first conv, zero final conv.

        The branch output stays exactly zero (the final conv is zero) while
        the first conv passes features through unchanged, which is the
        identity-matrix initialization of the color-conditioning stage.
        """
        self.conv1.weight.zero_()
        center = self.kernel // 2
        for c in range(self.channels):
            self.conv1.weight[c, c, center, center] = 1.0
        self.conv1.bias.zero_()
        self.conv2.weight.zero_()
        self.conv2.bias.zero_()
        self.style.affine.weight.zero_()
        self.style.affine.bias.zero_()


def modres_forward(block: ModResBlock, feature: torch.Tensor,
                   code: torch.Tensor) -> torch.Tensor:
    """Apply a ModRes block: feature plus its style-conditioned residual."""
    feature_b, squeeze = _as_batch(feature, 3)
    if feature_b.shape[1] != block.channels:
        raise ValidationError(
            f"feature has {feature_b.shape[1]} channels, block expects {block.channels}")
    code_b = code.unsqueeze(0) if code.ndim == 1 else code
    out = feature_b + block.residual(feature_b, code_b)
    return out.squeeze(0) if squeeze else out


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------

def block_resolutions(num_layers: int, output_resolution: int) -> list[int]:
    """One 4x4 block, then pairs per doubled resolution, capped at the output."""
    res = []
    for k in range(num_layers):
        res.append(min(4 * 2 ** math.ceil(k / 2), output_resolution))
    return res


class GeneratorModel(nn.Module):
    """Mapping network + synthesis blocks + ModRes injection points + to-RGB."""

    def __init__(self, d_latent: int = 64, num_layers: int = 8,
                 resolution: int = 64, channel_base: int = 64,
                 channel_min: int = 8, mapping_depth: int = 2,
                 modres_kernel: int = 3, role_tag: str = "base"):
        super().__init__()
        resolutions = block_resolutions(num_layers, resolution)
        if resolutions[-1] != resolution:
            raise ValidationError(
                f"{num_layers} layers cannot reach resolution {resolution}")
        self.d_latent = d_latent
        self.num_layers = num_layers
        self.resolution = resolution
        self.resolutions = resolutions
        self.role_tag = role_tag

        def channels_for(res: int) -> int:
            return max(channel_min, min(channel_base, channel_base // (res // 4)))

        self.channels = [channels_for(r) for r in resolutions]
        self.mapping = MappingNetwork(d_latent, mapping_depth)
        self.const = nn.Parameter(torch.ones(self.channels[0], 4, 4))

        blocks = []
        prev_ch, prev_res = self.channels[0], 4
        for ch, res in zip(self.channels, resolutions):
            blocks.append(SynthesisBlock(prev_ch, ch, d_latent, upsample=res > prev_res))
            prev_ch, prev_res = ch, res
        self.blocks = nn.ModuleList(blocks)
        self.modres = nn.ModuleList(
            ModResBlock(ch, d_latent, modres_kernel) for ch in self.channels)
        self.to_rgb = nn.Conv2d(self.channels[-1], 3, 1)

    def intrinsic_parameters(self):
        """Parameters of the base path: mapping, const, blocks, to-RGB."""
        yield from self.mapping.parameters()
        yield self.const
        yield from self.blocks.parameters()
        yield from self.to_rgb.parameters()

    def extrinsic_parameters(self):
        """Parameters of the residual style-injection path."""
        yield from self.modres.parameters()

    def run_synthesis(self, latent: LayerwiseLatent,
                      residual_codes: torch.Tensor | None = None,
                      weights: StyleWeightVector | None = None,
                      ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """Core synthesis walk; returns (image, per-block activations).

        ``residual_codes`` has shape (B, L, d); layer k's ModRes residual is
        scaled by ``weights[k]`` and skipped outright when that weight is 0,
        which keeps the weight-zero output bit-identical to the intrinsic
        pass.
        """
        if latent.num_layers != self.num_layers:
            raise ValidationError(
                f"latent has {latent.num_layers} layers, generator has {self.num_layers}")
        if latent.d_latent != self.d_latent:
            raise ValidationError(
                f"latent dimension {latent.d_latent} != generator d_latent {self.d_latent}")
        styles = latent.per_layer
        squeeze = styles.ndim == 2
        if squeeze:
            styles = styles.unsqueeze(0)
        if residual_codes is not None:
            if weights is None:
                raise ValidationError("residual codes given without style weights")
            if len(weights) != self.num_layers:
                raise ValidationError(
                    f"weight vector length {len(weights)} != layer count {self.num_layers}")
            if residual_codes.ndim == 2:
                residual_codes = residual_codes.unsqueeze(0)
            if residual_codes.shape[0] != styles.shape[0]:
                residual_codes = residual_codes.expand(styles.shape[0], -1, -1)

        batch = styles.shape[0]
        x = self.const.unsqueeze(0).expand(batch, -1, -1, -1)
        activations = []
        for k, block in enumerate(self.blocks):
            x = block(x, styles[:, k])
            if residual_codes is not None:
                w = weights.values[k]
                if w.item() != 0.0:
                    x = x + w * self.modres[k].residual(x, residual_codes[:, k])
            activations.append(x)
        img = torch.tanh(self.to_rgb(x))
        if squeeze:
            img = img.squeeze(0)
            activations = [a.squeeze(0) for a in activations]
        return img, activations


def build_generator(config, role_tag: str = "base", seed: int | None = None) -> GeneratorModel:
    """Construct and seed a generator from a RunConfig."""
    gen = GeneratorModel(
        d_latent=config.d_latent, num_layers=config.num_layers,
        resolution=config.resolution, channel_base=config.channel_base,
        channel_min=config.channel_min, mapping_depth=config.mapping_depth,
        modres_kernel=config.modres_kernel, role_tag=role_tag)
    return seed_module(gen, config.seed if seed is None else seed)


def synthesize_intrinsic(gen: GeneratorModel, latent: LayerwiseLatent) -> torch.Tensor:
    """Run the synthesis stack with every ModRes contribution disabled."""
    img, _ = gen.run_synthesis(latent)
    return img


def block_activations(gen: GeneratorModel, latent: LayerwiseLatent,
                      k_max: int) -> list[torch.Tensor]:
    """Intrinsic-path activations of blocks 1..k_max (coarsest first)."""
    if not 1 <= k_max <= gen.num_layers:
        raise ValidationError(f"k_max {k_max} outside 1..{gen.num_layers}")
    _, acts = gen.run_synthesis(latent)
    return acts[:k_max]
