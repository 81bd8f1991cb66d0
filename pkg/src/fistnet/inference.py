"""Checkpoint-backed inference shared by the CLI and the HTTP service.

Requests never mutate the loaded pipeline: per-request gate overrides build
lightweight gate objects that share the trained branch weights, so concurrent
callers each see an immutable model.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
import os
from pathlib import Path

import torch

from .curriculum_trainer import (CheckpointBundle, check_config_match,
                                 load_checkpoint, restore_bundle)
from .errors import ValidationError
from .extrinsic_path import (GatedMappingUnit, StylePipeline, build_pipeline,
                             encode, extrinsic_codes)
from .generator_core import (LayerwiseLatent, StyleWeightVector, map_latent,
                             synthesize_intrinsic)
from .latent_semantics import SemanticDirection, factorize


def load_pipeline(checkpoint_path: str | os.PathLike, config, *,
                  force: bool = False,
                  ) -> tuple[StylePipeline, CheckpointBundle, str]:
    """Restore a pipeline from a checkpoint; returns (pipe, bundle, file hash)."""
    blob = Path(checkpoint_path).read_bytes()
    bundle = load_checkpoint(checkpoint_path)
    check_config_match(bundle, config, force=force)
    pipe = build_pipeline(config, role_tag="transfer")
    restore_bundle(bundle, pipe.gen, pipe=pipe)
    return pipe, bundle, hashlib.sha256(blob).hexdigest()


def gmu_with_gamma(gmu: GatedMappingUnit, gamma: float) -> GatedMappingUnit:
    """A gate at a different blend point, sharing the trained branches."""
    clone = GatedMappingUnit(gmu.branch0.in_features, gamma)
    clone.branch0 = gmu.branch0
    clone.branch1 = gmu.branch1
    return clone


def apply_gamma(pipe: StylePipeline, gamma1: float | None,
                gamma2: float | None) -> StylePipeline:
    changes = {}
    if gamma1 is not None:
        changes["gmu_color"] = gmu_with_gamma(pipe.gmu_color, gamma1)
    if gamma2 is not None:
        changes["gmu_structure"] = gmu_with_gamma(pipe.gmu_structure, gamma2)
    return dataclasses.replace(pipe, **changes) if changes else pipe


def stylize_image(pipe: StylePipeline, img: torch.Tensor, weights, *,
                  sigma: float = 0.0, direction_rank: int | None = None,
                  gamma1: float | None = None, gamma2: float | None = None,
                  ) -> torch.Tensor:
    """Full dual-path stylization of one image with interactive controls.

    ``sigma`` shifts the backbone latent along a factorized semantic
    direction (``direction_rank`` 0 selects the principal one) before
    mapping; the gate overrides apply only to this call.
    """
    if not math.isfinite(sigma):
        raise ValidationError(f"sigma must be finite, got {sigma}")
    if direction_rank is not None and direction_rank < 0:
        raise ValidationError(
            f"direction_rank counts from 0, got {direction_rank}")
    pipe = apply_gamma(pipe, gamma1, gamma2)
    gen = pipe.gen
    w = StyleWeightVector.from_any(weights, gen.num_layers)

    with torch.no_grad():
        z = encode(pipe.enc_backbone, img)
        if sigma != 0.0:
            rank = 0 if direction_rank is None else direction_rank
            direction = factorize(gen.mapping, rank + 1)[rank]
            z = z + sigma * direction.y
        code = map_latent(gen.mapping, z)
        intrinsic = LayerwiseLatent.broadcast(code, gen.num_layers)
        if bool((w.values == 0).all()):
            return synthesize_intrinsic(gen, intrinsic)
        codes = extrinsic_codes(gen, pipe.enc_color, pipe.enc_structure,
                                pipe.gmu_color, pipe.gmu_structure, img)
        out, _ = gen.run_synthesis(intrinsic, residual_codes=codes.per_layer,
                                   weights=w)
    return out


def semantic_directions(pipe: StylePipeline, top: int,
                        ) -> list[SemanticDirection]:
    if top < 1:
        raise ValidationError(f"top must be >= 1, got {top}")
    return factorize(pipe.gen.mapping, top)
