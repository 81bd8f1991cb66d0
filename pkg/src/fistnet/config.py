"""Run configuration: one flat record validated against every module's invariants.

The default values are the full-scale ones named in the architecture's
reference setting (structural loss over the first 2 blocks, learning rate
0.05, segmentation trade-off 0.2, 10 offset-optimization iterations, the
{5: 2000, 6: 200, 7: 200} stage-II layer budget, 18 style-weight entries).
``RunConfig.toy()`` scales everything down to sizes the test suite can train
on a CPU in seconds.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .errors import ValidationError

CONFIG_ENV_VAR = "FISTNET_CONFIG"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class RunConfig:
    # Geometry.
    resolution: int = 1024          # generator output and dataset image size
    d_latent: int = 512
    num_layers: int = 18            # L: ModRes injection points and len(W)
    channel_base: int = 512
    channel_min: int = 32
    mapping_depth: int = 8
    modres_kernel: int = 3

    # Named hyperparameters.
    structural_blocks: int = 2      # K: coarse blocks compared by the structural loss
    learning_rate: float = 0.05
    lr_scale: float = 1.0           # stability multiplier applied by trainers
    alpha_seg: float = 0.2
    offset_iterations: int = 10
    alpha_pl: float = 1.0
    alpha_adv: float = 1.0
    modres_reg_weight: float = 1e-3
    sigma_identity: float = 1.0
    seg_sign: str = "paper"         # "paper" (-) or "restorative" (+)
    adv_non_saturating: bool = False

    # Stage schedules. stage2_layer_iterations maps layer index -> iterations;
    # execution order is always non-increasing in the layer index.
    intrinsic_iterations: int = 1000
    stage2_layer_iterations: dict[int, int] = field(
        default_factory=lambda: {5: 2000, 6: 200, 7: 200})
    stage3_iterations: int = 1000
    batch_size: int = 4

    # Gated mapping units (one per extrinsic encoder).
    gamma1: float = 1.0
    gamma2: float = 1.0

    # Seeds. Encoder seeds are frozen into checkpoints.
    seed: int = 0
    encoder_sg_seed: int = 101
    encoder1_seed: int = 102
    encoder2_seed: int = 103
    perceptual_seed: int = 104
    embedder_seed: int = 105
    segmenter_seed: int = 106
    discriminator_seed: int = 107

    # Paths.
    data_dir: str = "data"
    out_dir: str = "runs"

    def __post_init__(self):
        self.stage2_layer_iterations = {
            int(k): int(v) for k, v in self.stage2_layer_iterations.items()}
        self.validate()

    def validate(self) -> None:
        if not _is_power_of_two(self.resolution) or self.resolution < 4:
            raise ValidationError(f"resolution must be a power of two >= 4, got {self.resolution}")
        if self.d_latent < 1:
            raise ValidationError("d_latent must be positive")
        if self.num_layers < 2:
            raise ValidationError("num_layers must be at least 2")
        if self.channel_base < self.channel_min or self.channel_min < 1:
            raise ValidationError("channel_base must be >= channel_min >= 1")
        if self.mapping_depth < 1:
            raise ValidationError("mapping_depth must be at least 1")
        if self.modres_kernel not in (1, 3):
            raise ValidationError("modres_kernel must be 1 or 3")
        if not 1 <= self.structural_blocks <= self.num_layers:
            raise ValidationError("structural_blocks must lie in 1..num_layers")
        for name in ("learning_rate", "lr_scale"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("alpha_seg", "alpha_pl", "alpha_adv", "modres_reg_weight"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.offset_iterations < 1:
            raise ValidationError("offset_iterations must be at least 1")
        if self.seg_sign not in ("paper", "restorative"):
            raise ValidationError("seg_sign must be 'paper' or 'restorative'")
        for name in ("intrinsic_iterations", "stage3_iterations"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        for layer, iters in self.stage2_layer_iterations.items():
            if not 1 <= layer <= self.num_layers:
                raise ValidationError(f"stage-II layer {layer} outside 1..{self.num_layers}")
            if iters <= 0:
                raise ValidationError(f"stage-II iteration count for layer {layer} must be positive")
        for name in ("gamma1", "gamma2"):
            g = getattr(self, name)
            if not 0.0 <= g <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {g}")

    @classmethod
    def toy(cls, **overrides) -> "RunConfig":
        """Desk-scale preset: 64x64 images, 8 layers, CPU-trainable budgets.

        The learning rate keeps its named 0.05 value; ``lr_scale`` 0.01 is the
        stability reduction trainers apply at this scale.
        """
        values = dict(
            resolution=64,
            d_latent=64,
            num_layers=8,
            channel_base=64,
            channel_min=8,
            mapping_depth=2,
            lr_scale=0.01,
            intrinsic_iterations=60,
            stage2_layer_iterations={3: 200, 4: 50, 5: 50},
            stage3_iterations=60,
            batch_size=4,
            alpha_adv=0.1,
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        # JSON object keys are strings; normalize so load(save(x)) == x.
        d["stage2_layer_iterations"] = {
            str(k): v for k, v in self.stage2_layer_iterations.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def effective_lr(self) -> float:
        """Optimizer step size: the base rate scaled for the run size."""
        return self.learning_rate * self.lr_scale

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def load_config(path: str | None = None) -> RunConfig:
    """Load a JSON config; falls back to $FISTNET_CONFIG, then to defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
        if path is None:
            return RunConfig()
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config.to_json() + "\n")
