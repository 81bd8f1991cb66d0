import numpy as np
import pytest
import torch

from fistnet.config import RunConfig
from fistnet.generator_core import build_generator


def tiny_config(**overrides) -> RunConfig:
    """A minimal 16x16 setup so per-test model builds stay cheap."""
    base = dict(
        resolution=16, d_latent=16, num_layers=4, channel_base=16,
        channel_min=4, mapping_depth=2, intrinsic_iterations=8,
        stage2_layer_iterations={2: 8, 3: 4}, stage3_iterations=8,
        batch_size=2, lr_scale=0.01,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def cfg_tiny() -> RunConfig:
    return tiny_config()


@pytest.fixture
def cfg_toy() -> RunConfig:
    return RunConfig.toy()


@pytest.fixture
def gen_tiny(cfg_tiny):
    return build_generator(cfg_tiny, role_tag="base", seed=7)


@pytest.fixture
def gen_toy(cfg_toy):
    return build_generator(cfg_toy, role_tag="base", seed=7)


def rand_latent(d, seed=0, batch=None):
    g = torch.Generator().manual_seed(seed)
    shape = (d,) if batch is None else (batch, d)
    return torch.randn(shape, generator=g)


def rand_image(resolution, seed=0, batch=None):
    g = torch.Generator().manual_seed(seed)
    shape = (3, resolution, resolution) if batch is None else (batch, 3, resolution, resolution)
    return torch.rand(shape, generator=g) * 2.0 - 1.0


def numpy_rng(seed=0):
    return np.random.default_rng(seed)
