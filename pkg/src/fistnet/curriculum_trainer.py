"""Three-stage curriculum fine-tuning with versioned checkpointing.

Stage I fine-tunes the intrinsic path against a frozen copy of itself
(structural + adversarial) and then primes the residual injectors: color-row
blocks start silent, structure-row blocks start as exact pass-throughs, so
the dual path initially reproduces the intrinsic output for any weight
vector. Stage II teaches the residual path latent-mixing targets layer by
layer, walking the schedule from the finest trained layer downward. Stage
III optimizes the full objective on real data batches.

Checkpoints are a small versioned binary container: a JSON header naming
stage, iteration, config hash, and frozen-net seeds, followed by raw named
tensors and a trailing content digest. Writes are atomic (temp + rename).
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.optim import Adam

from .errors import (CheckpointError, ConfigMismatchError, DivergenceError,
                     IntegrityError, ValidationError, VersionMismatchError)
from .extrinsic_path import (StylePipeline, ExtrinsicStyleCode, build_pipeline,
                             gmu_forward, pipeline_synthesize)
from .generator_core import (GeneratorModel, LayerwiseLatent,
                             StyleWeightVector, map_latent,
                             synthesize_intrinsic)
from .latent_semantics import (FaceEmbedder, FaceSegmenter, MapNetLossConfig,
                               factorize, identity_loss, optimize_offset)
from .losses import (Discriminator, PerceptualFeatureNet, StructuralLossConfig,
                     adversarial_loss, content_loss, modres_l2,
                     non_saturating_gen_loss, perceptual_loss, structural_loss,
                     style_loss)

CHECKPOINT_MAGIC = b"FNCK"
CHECKPOINT_VERSION = 1
ADAM_BETAS = (0.5, 0.999)

# Loss names each stage logs, and nothing else.
STAGE_LOSS_KEYS = {
    1: ("structural", "adversarial"),
    2: ("perceptual", "adversarial"),
    3: ("content", "style", "perceptual", "adversarial", "identity", "modres_l2"),
}


# ---------------------------------------------------------------------------
# Schedules and loss weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageLossWeights:
    """Scalar multipliers on the stage objectives; all must be finite and >= 0.

    alpha_content / alpha_style only matter in stage III, where zeroing them
    (together with alpha_pl and alpha_adv) isolates the ModRes regularizer.
    """
    alpha_pl: float = 1.0
    alpha_adv: float = 1.0
    alpha_content: float = 1.0
    alpha_style: float = 1.0

    def __post_init__(self):
        for name in ("alpha_pl", "alpha_adv", "alpha_content", "alpha_style"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def from_run_config(cls, config) -> "StageLossWeights":
        return cls(alpha_pl=config.alpha_pl, alpha_adv=config.alpha_adv)


@dataclass
class StageSchedule:
    """Iteration budget for one stage.

    ``iterations`` drives stages I and III. Stage II instead walks
    ``layer_schedule``: (layer, iterations) pairs, canonicalized to strictly
    decreasing layer order so the finest scheduled layer trains first.
    """
    stage: int
    iterations: int = 0
    layer_schedule: tuple = ()
    learning_rate: float = 0.05
    batch_size: int = 4

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValidationError(f"stage must be 1, 2 or 3, got {self.stage}")
        if self.iterations < 0:
            raise ValidationError("iterations must be >= 0")
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise ValidationError(f"bad learning rate {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        pairs = [(int(l), int(n)) for l, n in self.layer_schedule]
        for l, n in pairs:
            if l < 1:
                raise ValidationError(f"layer index {l} out of range")
            if n < 0:
                raise ValidationError(f"negative iteration count for layer {l}")
        if len({l for l, _ in pairs}) != len(pairs):
            raise ValidationError("duplicate layer in schedule")
        # Highest layer first; the schedule narrows the fused region each pass.
        self.layer_schedule = tuple(sorted(pairs, key=lambda p: -p[0]))

    @classmethod
    def from_run_config(cls, config, stage: int) -> "StageSchedule":
        iterations = {1: config.intrinsic_iterations,
                      2: 0,
                      3: config.stage3_iterations}[stage]
        layers = ()
        if stage == 2:
            layers = tuple(config.stage2_layer_iterations.items())
        return cls(stage=stage, iterations=iterations, layer_schedule=layers,
                   learning_rate=config.effective_lr(),
                   batch_size=config.batch_size)


# ---------------------------------------------------------------------------
# Loss logging: JSON-lines rows of {step, stage, loss_name, value}
# ---------------------------------------------------------------------------

class TrainLogger:
    """Collects per-step loss rows, optionally mirroring them to a file."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.rows: list[dict] = []
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def log(self, step: int, stage: int, values: dict[str, float]) -> None:
        batch = [{"step": int(step), "stage": int(stage),
                  "loss_name": name, "value": float(v)}
                 for name, v in values.items()]
        self.rows.extend(batch)
        if self.path is not None:
            with open(self.path, "a") as fh:
                for row in batch:
                    fh.write(json.dumps(row, sort_keys=True) + "\n")

    def names(self, stage: int) -> set:
        return {r["loss_name"] for r in self.rows if r["stage"] == stage}

    def values(self, stage: int, loss_name: str) -> list[float]:
        return [r["value"] for r in self.rows
                if r["stage"] == stage and r["loss_name"] == loss_name]


def moving_average(xs: list[float], window: int = 10) -> list[float]:
    if not xs:
        return []
    out = []
    for i in range(len(xs)):
        lo = max(0, i + 1 - window)
        out.append(sum(xs[lo:i + 1]) / (i + 1 - lo))
    return out


# ---------------------------------------------------------------------------
# Stage I
# ---------------------------------------------------------------------------

def stage1_initialize(gen: GeneratorModel) -> GeneratorModel:
    """Prime the residual injectors for color-first transfer.

    Fine rows (the color half) start at zero so they contribute nothing;
    coarse rows (the structure half) start as exact pass-throughs. Either
    way every residual is exactly zero, so the dual-path output with any
    weight vector equals the intrinsic output bit for bit.
    """
    split = gen.num_layers // 2
    for k, block in enumerate(gen.modres):
        if k < split:
            block.initialize_identity()
        else:
            block.initialize_zero()
    return gen


def _check_finite(value: float, recent: list[float], stage: int,
                  save: "callable | None") -> None:
    if math.isfinite(value):
        return
    path = save() if save is not None else None
    raise DivergenceError(
        f"non-finite loss in stage {stage}",
        trajectory=list(recent), checkpoint_path=path)


def train_intrinsic(base: GeneratorModel, data, schedule: StageSchedule, *,
                    run_config, weights: StageLossWeights | None = None,
                    disc: Discriminator | None = None,
                    logger: TrainLogger | None = None,
                    out_dir: str | os.PathLike | None = None,
                    ) -> GeneratorModel:
    """Fine-tune a copy of ``base`` with structural + adversarial losses.

    ``base`` itself is never touched; it stays the frozen reference the
    structural term is measured against. Zero iterations returns a copy
    with weights identical to the input.
    """
    weights = weights or StageLossWeights()
    transfer = copy.deepcopy(base)
    transfer.role_tag = "transfer"
    if schedule.iterations == 0:
        return transfer

    if disc is None:
        disc = Discriminator(run_config.discriminator_seed)
    struct_cfg = StructuralLossConfig(num_blocks=run_config.structural_blocks)
    opt_g = Adam(transfer.intrinsic_parameters(), lr=schedule.learning_rate,
                 betas=ADAM_BETAS)
    opt_d = Adam(disc.parameters(), lr=schedule.learning_rate, betas=ADAM_BETAS)
    rng = torch.Generator().manual_seed(run_config.seed + 1)
    batches = data.batches(schedule.batch_size,
                           torch.Generator().manual_seed(run_config.seed + 17))
    totals: list[float] = []

    def emergency():
        if out_dir is None:
            return None
        path = Path(out_dir) / "diverged_stage1.ckpt"
        save_checkpoint(pack_bundle(transfer, disc, stage=1,
                                    iteration=len(totals), config=run_config),
                        path)
        return path

    for step in range(schedule.iterations):
        z = torch.randn(schedule.batch_size, transfer.d_latent, generator=rng)
        real = next(batches)

        # Shared probe latent: both synthesis stacks see the same style rows.
        probe = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z).detach(), base.num_layers)
        fake = synthesize_intrinsic(
            transfer,
            LayerwiseLatent.broadcast(map_latent(transfer.mapping, z),
                                      transfer.num_layers))

        gen_term, _ = adversarial_loss(disc, fake, real)
        if run_config.adv_non_saturating:
            gen_adv = non_saturating_gen_loss(disc, fake)
        else:
            gen_adv = gen_term
        struct = structural_loss(base, transfer, probe, struct_cfg)
        total = struct + weights.alpha_adv * gen_adv

        opt_g.zero_grad()
        total.backward()
        opt_g.step()

        d_value = 0.0
        if weights.alpha_adv > 0:
            _, disc_term = adversarial_loss(disc, fake.detach(), real)
            loss_d = -disc_term
            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()
            d_value = loss_d.detach().item()

        # The smoke total tracks both players: everything being minimized
        # this step. It is what the moving-average health check watches.
        value = total.detach().item() + d_value
        totals.append(value)
        if logger is not None:
            logger.log(step, 1, {"structural": struct.detach().item(),
                                 "adversarial": gen_adv.detach().item()})
        _check_finite(value, totals[-20:], 1, emergency)

    transfer._stage_totals = totals
    return transfer


# ---------------------------------------------------------------------------
# Stage II
# ---------------------------------------------------------------------------

def _stage2_step(pipe: StylePipeline, layer: int, z1: torch.Tensor,
                 z2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """One stage-II forward: (model output, detached mixing target).

    The target renders the intrinsic path on a spliced latent: rows below
    ``layer`` from the first draw, rows from ``layer`` up from the second.
    The model must reproduce it through the residual path, driven by the
    gated codes of the same two draws with the weight vector pinned at one.
    """
    gen = pipe.gen
    with torch.no_grad():
        w1 = map_latent(gen.mapping, z1)
        w2 = map_latent(gen.mapping, z2)
        target = synthesize_intrinsic(
            gen, LayerwiseLatent.concat(w1, w2, layer, gen.num_layers)).detach()

    codes = ExtrinsicStyleCode.assemble(
        gmu_forward(pipe.gmu_structure, w1),
        gmu_forward(pipe.gmu_color, w2),
        gen.num_layers, split_index=layer)
    out, _ = gen.run_synthesis(
        LayerwiseLatent.broadcast(w1, gen.num_layers),
        residual_codes=codes.per_layer,
        weights=StyleWeightVector.ones(gen.num_layers))
    return out, target


def train_stage2(pipe: StylePipeline, disc: Discriminator,
                 schedule: StageSchedule, weights: StageLossWeights,
                 seed: int, *, run_config,
                 pnet: PerceptualFeatureNet | None = None,
                 logger: TrainLogger | None = None,
                 out_dir: str | os.PathLike | None = None) -> GeneratorModel:
    """Latent-mixing distillation over the decreasing layer schedule."""
    gen = pipe.gen
    for layer, _ in schedule.layer_schedule:
        if layer > gen.num_layers:
            raise ValidationError(
                f"schedule layer {layer} exceeds generator depth {gen.num_layers}")
    if pnet is None:
        pnet = PerceptualFeatureNet(run_config.perceptual_seed)
    opt_g = Adam(pipe.trainable_extrinsic_parameters(),
                 lr=schedule.learning_rate, betas=ADAM_BETAS)
    opt_d = Adam(disc.parameters(), lr=schedule.learning_rate, betas=ADAM_BETAS)
    rng = torch.Generator().manual_seed(seed)
    totals: list[float] = []
    step = 0

    def emergency():
        if out_dir is None:
            return None
        path = Path(out_dir) / "diverged_stage2.ckpt"
        save_checkpoint(pack_bundle(gen, disc, stage=2, iteration=step,
                                    config=run_config, pipe=pipe), path)
        return path

    for layer, iterations in schedule.layer_schedule:
        for _ in range(iterations):
            z1 = torch.randn(schedule.batch_size, gen.d_latent, generator=rng)
            z2 = torch.randn(schedule.batch_size, gen.d_latent, generator=rng)
            out, target = _stage2_step(pipe, layer, z1, z2)

            pl = perceptual_loss(pnet, out, target)
            gen_term, _ = adversarial_loss(disc, out, target)
            if run_config.adv_non_saturating:
                gen_adv = non_saturating_gen_loss(disc, out)
            else:
                gen_adv = gen_term
            total = weights.alpha_pl * pl + weights.alpha_adv * gen_adv

            # Both weights at zero means no objective: skip both players so
            # the iteration leaves every parameter bit-identical.
            d_value = 0.0
            if weights.alpha_pl > 0 or weights.alpha_adv > 0:
                opt_g.zero_grad()
                total.backward()
                opt_g.step()
            if weights.alpha_adv > 0:
                _, disc_term = adversarial_loss(disc, out.detach(), target)
                loss_d = -disc_term
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
                d_value = loss_d.detach().item()

            value = total.detach().item() + d_value
            totals.append(value)
            if logger is not None:
                logger.log(step, 2, {"perceptual": pl.detach().item(),
                                     "adversarial": gen_adv.detach().item()})
            _check_finite(value, totals[-20:], 2, emergency)
            step += 1

    gen._stage_totals = totals
    return gen


# ---------------------------------------------------------------------------
# Stage III
# ---------------------------------------------------------------------------

def _identity_prepass(gen: GeneratorModel, run_config,
                      embedder: FaceEmbedder, segmenter: FaceSegmenter,
                      ) -> float:
    """Semantic-offset correction, then the residual embedding gap it leaves.

    Runs the offset search along the principal mapping direction and reports
    the identity gap at the corrected latent. The intrinsic path is frozen
    during stage III, so this is a monitored readout, not a gradient source.
    """
    direction = factorize(gen.mapping, 1)[0]
    cfg = MapNetLossConfig.from_run_config(run_config)
    sigma = run_config.sigma_identity
    offset, _ = optimize_offset(gen, embedder, segmenter, cfg, sigma, direction)
    unscaled = offset / sigma if sigma != 0 else torch.zeros_like(offset)
    with torch.no_grad():
        value = identity_loss(gen, embedder, sigma, direction, unscaled)
    return float(value.item())


def train_stage3(pipe: StylePipeline, disc: Discriminator, data,
                 schedule: StageSchedule, weights: StageLossWeights, *,
                 run_config, base: GeneratorModel | None = None,
                 pnet: PerceptualFeatureNet | None = None,
                 embedder: FaceEmbedder | None = None,
                 segmenter: FaceSegmenter | None = None,
                 logger: TrainLogger | None = None,
                 out_dir: str | os.PathLike | None = None) -> GeneratorModel:
    """Full-objective fine-tuning of the residual path on real batches."""
    gen = pipe.gen
    if pnet is None:
        pnet = PerceptualFeatureNet(run_config.perceptual_seed)
    if embedder is None:
        embedder = FaceEmbedder(seed=run_config.embedder_seed)
    if segmenter is None:
        segmenter = FaceSegmenter(seed=run_config.segmenter_seed)
    identity_ref = base if base is not None else gen
    identity_value = _identity_prepass(identity_ref, run_config,
                                       embedder, segmenter)

    opt_g = Adam(pipe.trainable_extrinsic_parameters(),
                 lr=schedule.learning_rate, betas=ADAM_BETAS)
    opt_d = Adam(disc.parameters(), lr=schedule.learning_rate, betas=ADAM_BETAS)
    batches = data.batches(schedule.batch_size,
                           torch.Generator().manual_seed(run_config.seed + 37))
    ones = StyleWeightVector.ones(gen.num_layers)
    totals: list[float] = []

    def emergency():
        if out_dir is None:
            return None
        path = Path(out_dir) / "diverged_stage3.ckpt"
        save_checkpoint(pack_bundle(gen, disc, stage=3, iteration=len(totals),
                                    config=run_config, pipe=pipe), path)
        return path

    for step in range(schedule.iterations):
        batch = next(batches)
        # Style references come from the same batch, rotated one position.
        style_ref = torch.roll(batch, shifts=1, dims=0)

        out = pipeline_synthesize(pipe, batch, ones)
        with torch.no_grad():
            plain = pipeline_synthesize(
                pipe, batch, StyleWeightVector.zeros(gen.num_layers))

        l_content = content_loss(pnet, out, batch)
        l_style = style_loss(pnet, out, style_ref)
        l_pl = perceptual_loss(pnet, out, plain)
        gen_term, _ = adversarial_loss(disc, out, batch)
        if run_config.adv_non_saturating:
            gen_adv = non_saturating_gen_loss(disc, out)
        else:
            gen_adv = gen_term
        l_reg = modres_l2(gen)

        total = (weights.alpha_content * l_content
                 + weights.alpha_style * l_style
                 + weights.alpha_pl * l_pl
                 + weights.alpha_adv * gen_adv
                 + run_config.modres_reg_weight * l_reg)

        active = (weights.alpha_content > 0 or weights.alpha_style > 0
                  or weights.alpha_pl > 0 or weights.alpha_adv > 0
                  or run_config.modres_reg_weight > 0)
        d_value = 0.0
        if active:
            opt_g.zero_grad()
            total.backward()
            opt_g.step()
        if weights.alpha_adv > 0:
            _, disc_term = adversarial_loss(disc, out.detach(), batch)
            loss_d = -disc_term
            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()
            d_value = loss_d.detach().item()

        value = total.detach().item() + d_value
        totals.append(value)
        if logger is not None:
            logger.log(step, 3, {
                "content": l_content.detach().item(),
                "style": l_style.detach().item(),
                "perceptual": l_pl.detach().item(),
                "adversarial": gen_adv.detach().item(),
                "identity": identity_value,
                "modres_l2": l_reg.detach().item(),
            })
        _check_finite(value, totals[-20:], 3, emergency)

    gen._stage_totals = totals
    return gen


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

@dataclass
class CheckpointBundle:
    """Everything needed to resume: weights, provenance, and stage marker."""
    stage: int
    iteration: int
    config_hash: str
    encoder_seeds: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict)
    format_version: int = CHECKPOINT_VERSION


def _frozen_seeds(config) -> dict:
    return {
        "backbone": config.encoder_sg_seed,
        "color": config.encoder1_seed,
        "structure": config.encoder2_seed,
        "perceptual": config.perceptual_seed,
        "embedder": config.embedder_seed,
        "segmenter": config.segmenter_seed,
        "discriminator": config.discriminator_seed,
    }


def pack_bundle(gen: GeneratorModel, disc: Discriminator | None, *,
                stage: int, iteration: int, config,
                pipe: StylePipeline | None = None) -> CheckpointBundle:
    tensors: dict[str, torch.Tensor] = {}
    for name, t in gen.state_dict().items():
        tensors[f"generator.{name}"] = t
    if disc is not None:
        for name, t in disc.state_dict().items():
            tensors[f"discriminator.{name}"] = t
    if pipe is not None:
        for name, t in pipe.gmu_color.state_dict().items():
            tensors[f"gmu_color.{name}"] = t
        for name, t in pipe.gmu_structure.state_dict().items():
            tensors[f"gmu_structure.{name}"] = t
    return CheckpointBundle(stage=stage, iteration=iteration,
                            config_hash=config.config_hash(),
                            encoder_seeds=_frozen_seeds(config),
                            tensors=tensors)


_DTYPE_NAMES = {torch.float32: "float32", torch.float64: "float64",
                torch.int64: "int64", torch.int32: "int32",
                torch.uint8: "uint8", torch.bool: "bool"}
_NAMES_DTYPE = {v: k for k, v in _DTYPE_NAMES.items()}


def save_checkpoint(bundle: CheckpointBundle, path: str | os.PathLike) -> None:
    """Atomic, byte-stable write: header JSON, raw tensors, content digest."""
    names = sorted(bundle.tensors)
    index = []
    chunks = []
    for name in names:
        t = bundle.tensors[name].detach().cpu().contiguous()
        dtype = _DTYPE_NAMES.get(t.dtype)
        if dtype is None:
            raise CheckpointError(f"unsupported tensor dtype {t.dtype} for {name}")
        raw = t.numpy().tobytes()
        index.append({"name": name, "dtype": dtype,
                      "shape": list(t.shape), "nbytes": len(raw)})
        chunks.append(raw)
    header = {
        "format_version": bundle.format_version,
        "stage": bundle.stage,
        "iteration": bundle.iteration,
        "config_hash": bundle.config_hash,
        "encoder_seeds": bundle.encoder_seeds,
        "tensors": index,
    }
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode()
    payload = b"".join(chunks)
    digest = hashlib.sha256(header_bytes + payload).digest()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", bundle.format_version))
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            fh.write(payload)
            fh.write(digest)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | os.PathLike) -> CheckpointBundle:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, this build reads "
            f"{CHECKPOINT_VERSION}")
    (header_len,) = struct.unpack("<Q", blob[8:16])
    header_end = 16 + header_len
    header_bytes = blob[16:header_end]
    payload = blob[header_end:-32]
    digest = blob[-32:]
    if hashlib.sha256(header_bytes + payload).digest() != digest:
        raise IntegrityError(f"{path}: content digest mismatch")
    header = json.loads(header_bytes)

    tensors = {}
    offset = 0
    for entry in header["tensors"]:
        raw = payload[offset:offset + entry["nbytes"]]
        offset += entry["nbytes"]
        arr = np.frombuffer(raw, dtype=entry["dtype"]).copy()
        t = torch.from_numpy(arr).reshape(entry["shape"])
        tensors[entry["name"]] = t.to(_NAMES_DTYPE[entry["dtype"]])
    return CheckpointBundle(stage=header["stage"],
                            iteration=header["iteration"],
                            config_hash=header["config_hash"],
                            encoder_seeds=header["encoder_seeds"],
                            tensors=tensors,
                            format_version=header["format_version"])


def check_config_match(bundle: CheckpointBundle, config,
                       force: bool = False) -> None:
    if bundle.config_hash == config.config_hash():
        return
    warnings.warn("checkpoint was written under a different config "
                  f"(hash {bundle.config_hash[:12]}..., current "
                  f"{config.config_hash()[:12]}...)")
    if not force:
        raise ConfigMismatchError(
            "config hash mismatch; pass force=True to resume anyway")


def ensure_stage_at_least(bundle: CheckpointBundle, minimum: int,
                          action: str) -> None:
    if bundle.stage < minimum:
        raise CheckpointError(
            f"{action} needs a stage >= {minimum} checkpoint, "
            f"got stage {bundle.stage}")


def _split_state(tensors: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {name[plen:]: t for name, t in tensors.items()
            if name.startswith(prefix + ".")}


def restore_bundle(bundle: CheckpointBundle, gen: GeneratorModel,
                   disc: Discriminator | None = None,
                   pipe: StylePipeline | None = None) -> None:
    gen.load_state_dict(_split_state(bundle.tensors, "generator"))
    if disc is not None:
        state = _split_state(bundle.tensors, "discriminator")
        if state:
            disc.load_state_dict(state)
    if pipe is not None:
        state = _split_state(bundle.tensors, "gmu_color")
        if state:
            pipe.gmu_color.load_state_dict(state)
        state = _split_state(bundle.tensors, "gmu_structure")
        if state:
            pipe.gmu_structure.load_state_dict(state)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

@dataclass
class CurriculumResult:
    base: GeneratorModel
    pipe: StylePipeline
    disc: Discriminator
    logger: TrainLogger
    totals: dict
    checkpoints: dict


def run_curriculum(config, data, *, out_dir: str | os.PathLike | None = None,
                   log_path: str | os.PathLike | None = None,
                   weights: StageLossWeights | None = None,
                   stages: tuple = (1, 2, 3)) -> CurriculumResult:
    """Stages I, II, III in order, checkpointing after each when out_dir set."""
    from .generator_core import build_generator

    weights = weights or StageLossWeights.from_run_config(config)
    logger = TrainLogger(log_path)
    base = build_generator(config, role_tag="base")
    disc = Discriminator(config.discriminator_seed)
    pnet = PerceptualFeatureNet(config.perceptual_seed)
    totals: dict[int, list[float]] = {}
    checkpoints: dict[int, Path] = {}

    def snapshot(stage: int, gen: GeneratorModel, pipe_arg=None):
        if out_dir is None:
            return
        path = Path(out_dir) / f"stage{stage}.ckpt"
        save_checkpoint(pack_bundle(gen, disc, stage=stage,
                                    iteration=len(totals.get(stage, [])),
                                    config=config, pipe=pipe_arg), path)
        checkpoints[stage] = path

    transfer = base
    if 1 in stages:
        sched1 = StageSchedule.from_run_config(config, 1)
        transfer = train_intrinsic(base, data, sched1, run_config=config,
                                   weights=weights, disc=disc, logger=logger,
                                   out_dir=out_dir)
        stage1_initialize(transfer)
        totals[1] = getattr(transfer, "_stage_totals", [])
    else:
        transfer = copy.deepcopy(base)
        transfer.role_tag = "transfer"
        stage1_initialize(transfer)

    pipe = dataclasses.replace(build_pipeline(config, role_tag="transfer"),
                               gen=transfer)
    snapshot(1, transfer, pipe)

    if 2 in stages:
        sched2 = StageSchedule.from_run_config(config, 2)
        train_stage2(pipe, disc, sched2, weights, config.seed + 2,
                     run_config=config, pnet=pnet, logger=logger,
                     out_dir=out_dir)
        totals[2] = getattr(pipe.gen, "_stage_totals", [])
        snapshot(2, pipe.gen, pipe)

    if 3 in stages:
        sched3 = StageSchedule.from_run_config(config, 3)
        train_stage3(pipe, disc, data, sched3, weights, run_config=config,
                     base=base, pnet=pnet, logger=logger, out_dir=out_dir)
        totals[3] = getattr(pipe.gen, "_stage_totals", [])
        snapshot(3, pipe.gen, pipe)

    return CurriculumResult(base=base, pipe=pipe, disc=disc, logger=logger,
                            totals=totals, checkpoints=checkpoints)
