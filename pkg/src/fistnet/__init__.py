"""Dual-path facial style transfer: frozen-encoder fusion over a StyleGAN-like core."""

from .config import RunConfig, load_config, save_config
from .curriculum_trainer import (CheckpointBundle, CurriculumResult,
                                 StageLossWeights, StageSchedule, TrainLogger,
                                 load_checkpoint, run_curriculum,
                                 save_checkpoint, stage1_initialize,
                                 train_intrinsic, train_stage2, train_stage3)
from .errors import (CheckpointError, ConfigMismatchError, DatasetError,
                     DecodeError, DivergenceError, InsufficientSamplesError,
                     IntegrityError, NumericalError, ValidationError,
                     VersionMismatchError)
from .evaluation import (EvalReport, FeatureStatistics, extract_statistics,
                         fid, preference_report, render_fid_table,
                         run_fid_protocol, statistics_from_features)
from .extrinsic_path import (GatedMappingUnit, StylePipeline, build_pipeline,
                             pipeline_synthesize)
from .generator_core import (GeneratorModel, LayerwiseLatent,
                             StyleWeightVector, build_generator, map_latent,
                             synthesize_intrinsic)
from .image_pipeline import (ImageDataset, decode_image_bytes, encode_png,
                             ingest_dataset, load_image, save_image)
from .inference import (load_pipeline, semantic_directions, stylize_image)
from .latent_semantics import (SemanticDirection, directions_to_json,
                               factorize, identity_loss, optimize_offset)

__version__ = "0.1.0"

__all__ = [
    "CheckpointBundle", "CheckpointError", "ConfigMismatchError",
    "CurriculumResult", "DatasetError", "DecodeError", "DivergenceError",
    "EvalReport", "FeatureStatistics", "GatedMappingUnit", "GeneratorModel",
    "ImageDataset", "InsufficientSamplesError", "IntegrityError",
    "LayerwiseLatent", "NumericalError", "RunConfig", "SemanticDirection",
    "StageLossWeights", "StageSchedule", "StylePipeline", "StyleWeightVector",
    "TrainLogger", "ValidationError", "VersionMismatchError",
    "build_generator", "build_pipeline", "decode_image_bytes",
    "directions_to_json", "encode_png", "extract_statistics", "factorize",
    "fid", "identity_loss", "ingest_dataset", "load_checkpoint",
    "load_config", "load_image", "load_pipeline", "map_latent",
    "optimize_offset", "pipeline_synthesize", "preference_report",
    "render_fid_table", "run_curriculum", "run_fid_protocol", "save_checkpoint",
    "save_config", "save_image", "semantic_directions", "stage1_initialize",
    "statistics_from_features", "stylize_image", "synthesize_intrinsic",
    "train_intrinsic", "train_stage2", "train_stage3", "__version__",
]
