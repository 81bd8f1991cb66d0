"""Closed-form latent semantics and identity-preserving offset refinement.

The mapping network's first layer is a plain affine map, so its semantic
directions come out of a symmetric eigendecomposition of w^T w: no sampling,
no training. Manipulation moves the mapping input along a unit direction
scaled by an intensity sigma. Because that shift can drift facial identity,
the offset is refined by a few gradient steps against a frozen recognition
embedder, with a frozen segmenter acting as the low-level counterweight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import DivergenceError, ValidationError
from .generator_core import (
    LEAKY_SLOPE, GeneratorModel, LayerwiseLatent, MappingNetwork, map_latent,
    seed_module, synthesize_intrinsic,
)

_SIGN_TOL = 1e-12


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class SemanticDirection:
    """A unit eigenvector of w^T w with its attained squared gain."""

    y: torch.Tensor
    eigenvalue: float
    rank: int

    def __post_init__(self):
        if self.y.ndim != 1:
            raise ValidationError("direction must be a 1-D vector")
        norm = float(torch.linalg.vector_norm(self.y))
        if abs(norm - 1.0) > 1e-5:
            raise ValidationError(f"direction norm {norm} is not 1")
        if self.eigenvalue < 0:
            raise ValidationError("eigenvalue must be non-negative")

    def to_json_dict(self) -> dict:
        return {"rank": self.rank, "eigenvalue": self.eigenvalue,
                "vector": [float(v) for v in self.y]}


@dataclass
class ManipulationRequest:
    sigma: float
    direction: SemanticDirection
    base_latent: torch.Tensor

    def __post_init__(self):
        if not np.isfinite(self.sigma):
            raise ValidationError("sigma must be finite")


@dataclass
class MapNetLossConfig:
    """Knobs for the offset refinement loop."""

    alpha_seg: float = 0.2
    offset_iterations: int = 10
    seg_sign: str = "paper"     # "paper" subtracts the seg term, "restorative" adds it
    learning_rate: float = 0.05

    def __post_init__(self):
        if self.alpha_seg < 0:
            raise ValidationError("alpha_seg must be non-negative")
        if self.offset_iterations < 1:
            raise ValidationError("offset_iterations must be at least 1")
        if self.seg_sign not in ("paper", "restorative"):
            raise ValidationError(f"unknown seg_sign {self.seg_sign!r}")

    @classmethod
    def from_run_config(cls, cfg) -> "MapNetLossConfig":
        return cls(alpha_seg=cfg.alpha_seg,
                   offset_iterations=cfg.offset_iterations,
                   seg_sign=cfg.seg_sign,
                   learning_rate=cfg.learning_rate)


class FaceEmbedder(nn.Module):
    """Frozen seeded stand-in for a recognition network: image -> unit vector."""

    def __init__(self, embed_dim: int = 32, seed: int = 0):
        super().__init__()
        self.embed_dim = embed_dim
        self.conv1 = nn.Conv2d(3, 16, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(32, 32, 3, stride=2, padding=1)
        self.project = nn.Linear(32, embed_dim)
        seed_module(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        squeeze = img.ndim == 3
        x = img.unsqueeze(0) if squeeze else img
        for conv in (self.conv1, self.conv2, self.conv3):
            x = F.leaky_relu(conv(x), LEAKY_SLOPE)
        x = x.mean(dim=(-2, -1))
        x = self.project(x)
        x = x / (torch.linalg.vector_norm(x, dim=-1, keepdim=True) + 1e-12)
        return x.squeeze(0) if squeeze else x


class FaceSegmenter(nn.Module):
    """Frozen seeded stand-in for a face parser: image -> per-pixel mask logits."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 8, 3, padding=1)
        self.head = nn.Conv2d(8, 1, 1)
        seed_module(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        squeeze = img.ndim == 3
        x = img.unsqueeze(0) if squeeze else img
        x = F.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        x = F.leaky_relu(self.conv2(x), LEAKY_SLOPE)
        x = self.head(x)
        return x.squeeze(0) if squeeze else x


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------

def factorize(net: MappingNetwork, top_n: int) -> list[SemanticDirection]:
    """Top directions of the first-layer weights by squared gain.

    Solves argmax_{y: y^T y = 1} of the squared mapped norm via the
    eigendecomposition of w^T w, in float64. Ordering is by descending
    eigenvalue with a stable sort, so a degenerate spectrum falls back to
    canonical basis order; each vector's first nonzero entry is made
    positive to fix the sign.
    """
    d = net.d_latent
    if not 1 <= top_n <= d:
        raise ValidationError(f"top_n {top_n} outside 1..{d}")
    w = net.weight_matrix.detach().cpu().numpy().astype(np.float64)
    if not np.isfinite(w).all():
        raise ValidationError("mapping weights contain non-finite values")
    wtw = w.T @ w
    eigvals, eigvecs = np.linalg.eigh(wtw)
    order = np.argsort(-eigvals, kind="stable")
    directions = []
    for rank, idx in enumerate(order[:top_n]):
        vec = eigvecs[:, idx]
        nonzero = np.nonzero(np.abs(vec) > _SIGN_TOL)[0]
        if nonzero.size and vec[nonzero[0]] < 0:
            vec = -vec
        directions.append(SemanticDirection(
            y=torch.from_numpy(vec.copy()).to(torch.float32),
            eigenvalue=float(max(eigvals[idx], 0.0)),
            rank=rank))
    return directions


def directions_to_json(directions: list[SemanticDirection]) -> list[dict]:
    return [d.to_json_dict() for d in directions]


def manipulate(net: MappingNetwork, req: ManipulationRequest) -> torch.Tensor:
    """Mapped latent of the base input shifted by sigma along the direction."""
    shifted = req.base_latent + req.sigma * req.direction.y
    with torch.no_grad():
        return map_latent(net, shifted)


# ---------------------------------------------------------------------------
# Identity / segmentation regularization
# ---------------------------------------------------------------------------

def _render(gen: GeneratorModel, mapping_input: torch.Tensor) -> torch.Tensor:
    """Synthesize the intrinsic image for a raw mapping-network input."""
    code = map_latent(gen.mapping, mapping_input)
    return synthesize_intrinsic(gen, LayerwiseLatent.broadcast(code, gen.num_layers))


def _feature_gap(gen: GeneratorModel, feature_net: nn.Module, sigma: float,
                 direction: SemanticDirection, offset: torch.Tensor) -> torch.Tensor:
    """Squared feature distance between the shifted render and its offset twin.

    Both latent inputs carry the same sigma * y shift; the second adds the
    sigma-scaled offset on top, so sigma = 0 collapses the two inputs and
    the gap is exactly zero.
    """
    base_input = float(sigma) * direction.y
    img_a = _render(gen, base_input)
    img_b = _render(gen, base_input + float(sigma) * offset)
    diff = feature_net(img_a) - feature_net(img_b)
    return (diff * diff).sum()


def identity_loss(gen: GeneratorModel, f: nn.Module, sigma: float,
                  direction: SemanticDirection, y_star_offset: torch.Tensor,
                  ) -> torch.Tensor:
    """Recognition-embedding gap between the render and its offset render."""
    return _feature_gap(gen, f, sigma, direction, y_star_offset)


def segmentation_loss(gen: GeneratorModel, f_seg: nn.Module, sigma: float,
                      direction: SemanticDirection, y_star_offset: torch.Tensor,
                      ) -> torch.Tensor:
    """Mask-logit gap between the render and its offset render."""
    return _feature_gap(gen, f_seg, sigma, direction, y_star_offset)


def mapnet_loss(gen: GeneratorModel, f: nn.Module, f_seg: nn.Module,
                cfg: MapNetLossConfig, sigma: float,
                direction: SemanticDirection, offset: torch.Tensor,
                ) -> torch.Tensor:
    """Identity term with the segmentation term as a signed counterweight."""
    loss = identity_loss(gen, f, sigma, direction, offset)
    seg = segmentation_loss(gen, f_seg, sigma, direction, offset)
    if cfg.seg_sign == "paper":
        return loss - cfg.alpha_seg * seg
    return loss + cfg.alpha_seg * seg


def optimize_offset(gen: GeneratorModel, f: nn.Module, f_seg: nn.Module,
                    cfg: MapNetLossConfig, sigma: float,
                    direction: SemanticDirection, *, loss_fn=None,
                    ) -> tuple[torch.Tensor, list[float]]:
    """Refine the manipulation offset by plain gradient descent.

    The optimized variable is the unscaled offset direction, seeded from the
    factorized direction itself; the losses apply the sigma scaling, so the
    effective offset being refined is sigma times the variable. Runs
    ``cfg.offset_iterations`` steps against the combined
    identity/segmentation objective (or a caller-supplied
    ``loss_fn(offset_var)``), then returns the final sigma-scaled offset and
    the loss trajectory, one entry per iteration. A non-finite loss aborts
    with the trajectory attached to the error.
    """
    offset_var = direction.y.detach().clone().requires_grad_(True)
    if loss_fn is None:
        def loss_fn(v):
            return mapnet_loss(gen, f, f_seg, cfg, sigma, direction, v)
    trajectory: list[float] = []
    for _ in range(cfg.offset_iterations):
        loss = loss_fn(offset_var)
        value = loss.detach().item()
        trajectory.append(value)
        if not np.isfinite(value):
            raise DivergenceError(
                f"offset refinement diverged at iteration {len(trajectory)}",
                trajectory=trajectory)
        grad, = torch.autograd.grad(loss, offset_var, allow_unused=True)
        if grad is None:
            grad = torch.zeros_like(offset_var)
        with torch.no_grad():
            offset_var -= cfg.learning_rate * grad
    return float(sigma) * offset_var.detach(), trajectory
