import math

import numpy as np
import pytest
import torch

from fistnet.errors import ValidationError
from fistnet.generator_core import (
    ADAIN_EPS, GeneratorModel, LayerwiseLatent, MappingNetwork, ModResBlock,
    StyleWeightVector, adain, block_activations, block_resolutions,
    build_generator, map_latent, modres_forward, seed_module,
    synthesize_intrinsic,
)

from conftest import rand_latent


class TestMapLatent:
    def test_zero_latent_zero_bias_identity_layers(self):
        net = MappingNetwork(4, depth=1)
        with torch.no_grad():
            net.first.weight.copy_(torch.eye(4))
            net.first.bias.zero_()
        z = torch.zeros(4)
        assert torch.equal(map_latent(net, z), torch.zeros(4))

    def test_identity_weights_add_bias(self):
        net = MappingNetwork(4, depth=1)
        b = torch.tensor([0.5, -1.0, 2.0, 0.0])
        with torch.no_grad():
            net.first.weight.copy_(torch.eye(4))
            net.first.bias.copy_(b)
        z = rand_latent(4, seed=1)
        assert torch.allclose(map_latent(net, z), z + b)

    def test_matches_matmul_oracle(self):
        # depth 1 is the pure affine map b + W z; recompute it in numpy
        rng = np.random.default_rng(42)
        w = rng.standard_normal((4, 4)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        z = rng.standard_normal(4).astype(np.float32)
        net = MappingNetwork(4, depth=1)
        with torch.no_grad():
            net.first.weight.copy_(torch.from_numpy(w))
            net.first.bias.copy_(torch.from_numpy(b))
        expected = b + w @ z
        got = map_latent(net, torch.from_numpy(z)).detach().numpy()
        np.testing.assert_allclose(got, expected, rtol=1e-6, atol=1e-6)

    def test_dimension_mismatch(self):
        net = MappingNetwork(4, depth=1)
        with pytest.raises(ValidationError):
            map_latent(net, torch.zeros(5))

    def test_deeper_layers_apply_nonlinearity(self):
        net = MappingNetwork(4, depth=2)
        with torch.no_grad():
            net.first.weight.copy_(torch.eye(4))
            net.first.bias.zero_()
            net.rest[0].weight.copy_(torch.eye(4))
            net.rest[0].bias.zero_()
        z = torch.tensor([1.0, -1.0, 2.0, -2.0])
        out = map_latent(net, z)
        expected = torch.where(z > 0, z, 0.2 * z)
        assert torch.allclose(out, expected)


class TestAdain:
    def test_normalized_content_takes_requested_stats(self):
        g = torch.Generator().manual_seed(0)
        x = torch.randn(1, 8, 8, generator=g)
        x = (x - x.mean()) / x.std(unbiased=False)
        out = adain(x, torch.tensor([3.0]), torch.tensor([2.0]))
        assert out.mean().item() == pytest.approx(3.0, abs=1e-5)
        assert out.std(unbiased=False).item() == pytest.approx(2.0, abs=1e-5)

    def test_identity_statistics_returns_normalized(self):
        g = torch.Generator().manual_seed(1)
        x = torch.randn(2, 8, 8, generator=g)
        out = adain(x, torch.zeros(2), torch.ones(2))
        for c in range(2):
            assert out[c].mean().item() == pytest.approx(0.0, abs=1e-6)
            assert out[c].std(unbiased=False).item() == pytest.approx(1.0, abs=1e-5)

    def test_random_input_moments_recomputed(self):
        g = torch.Generator().manual_seed(2)
        x = torch.randn(2, 4, 4, generator=g) * 3.0 + 1.0
        mu = torch.tensor([1.0, -1.0])
        sigma = torch.tensor([0.5, 2.0])
        out = adain(x, mu, sigma)
        for c in range(2):
            assert out[c].mean().item() == pytest.approx(mu[c].item(), abs=1e-5)
            assert out[c].std(unbiased=False).item() == pytest.approx(sigma[c].item(), abs=1e-5)

    def test_channel_mismatch(self):
        with pytest.raises(ValidationError):
            adain(torch.zeros(3, 4, 4), torch.zeros(2), torch.ones(2))

    def test_negative_std_rejected(self):
        with pytest.raises(ValidationError):
            adain(torch.zeros(1, 4, 4), torch.zeros(1), torch.tensor([-1.0]))

    def test_batched(self):
        g = torch.Generator().manual_seed(3)
        x = torch.randn(2, 3, 8, 8, generator=g)
        out = adain(x, torch.zeros(3), torch.ones(3))
        assert out.shape == x.shape


class TestModRes:
    def test_zero_weights_identity_bitwise(self):
        block = ModResBlock(3, 8)
        block.initialize_zero()
        g = torch.Generator().manual_seed(4)
        x = torch.randn(3, 8, 8, generator=g)
        code = torch.randn(8, generator=g)
        assert torch.equal(modres_forward(block, x, code), x)

    def test_zero_feature_zero_weights(self):
        block = ModResBlock(2, 8)
        block.initialize_zero()
        x = torch.zeros(2, 4, 4)
        out = modres_forward(block, x, torch.zeros(8))
        assert torch.equal(out, x)

    def test_identity_init_is_identity(self):
        # center-tap first conv, zero final conv: residual is exactly 0
        block = ModResBlock(3, 8, kernel=3)
        seed_module(block, 9)
        block.initialize_identity()
        g = torch.Generator().manual_seed(5)
        x = torch.randn(3, 8, 8, generator=g)
        code = torch.randn(8, generator=g)
        out = modres_forward(block, x, code)
        assert (out - x).abs().max().item() == 0.0

    def test_hand_computed_1x1(self):
        # 1 channel, 1x1 convs, constant modulation; recompute on paper:
        #   h = 2f + 1, norm, 1.5*norm + 1, leaky(0.2), 0.5*h - 0.2, plus f
        block = ModResBlock(1, 4, kernel=1)
        with torch.no_grad():
            block.conv1.weight.fill_(2.0)
            block.conv1.bias.fill_(1.0)
            block.conv2.weight.fill_(0.5)
            block.conv2.bias.fill_(-0.2)
            block.style.affine.weight.zero_()
            block.style.affine.bias.copy_(torch.tensor([0.5, 1.0]))  # scale, shift
            block.style_head.weight.zero_()
            block.style_head.bias.zero_()
        f = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float64)
        h = 2.0 * f + 1.0
        mu, sd = h.mean(), h.std()
        xhat = (h - mu) / (sd + ADAIN_EPS)
        m = 1.5 * xhat + 1.0
        act = np.where(m > 0, m, 0.2 * m)
        r = 0.5 * act - 0.2
        expected = f + r
        x = torch.tensor(f, dtype=torch.float32).unsqueeze(0)
        got = modres_forward(block, x, torch.zeros(4)).squeeze(0).detach().numpy()
        np.testing.assert_allclose(got, expected, rtol=1e-5, atol=1e-6)

    def test_shape_mismatch(self):
        block = ModResBlock(3, 8)
        with pytest.raises(ValidationError):
            modres_forward(block, torch.zeros(2, 4, 4), torch.zeros(8))


class TestLatentContainers:
    def test_broadcast(self):
        code = rand_latent(16, seed=6)
        lat = LayerwiseLatent.broadcast(code, 4)
        assert lat.per_layer.shape == (4, 16)
        assert lat.split_index == 4
        for k in range(4):
            assert torch.equal(lat.per_layer[k], code)

    def test_concat_boundary(self):
        a, b = rand_latent(8, seed=7), rand_latent(8, seed=8)
        lat = LayerwiseLatent.concat(a, b, boundary=3, num_layers=6)
        assert lat.split_index == 3
        for k in range(6):
            assert torch.equal(lat.per_layer[k], a if k < 3 else b)

    def test_split_index_bounds(self):
        with pytest.raises(ValidationError):
            LayerwiseLatent(torch.zeros(4, 8), split_index=5)
        with pytest.raises(ValidationError):
            LayerwiseLatent(torch.zeros(4, 8), split_index=0)

    def test_weight_vector_range(self):
        with pytest.raises(ValidationError):
            StyleWeightVector(torch.tensor([0.5, 1.2]))
        with pytest.raises(ValidationError):
            StyleWeightVector(torch.tensor([-0.1]))

    def test_weight_vector_from_any(self):
        v = StyleWeightVector.from_any(1.0, 4)
        assert torch.equal(v.values, torch.ones(4))
        v = StyleWeightVector.from_any([0.0, 0.5, 1.0, 0.25], 4)
        assert len(v) == 4
        with pytest.raises(ValidationError):
            StyleWeightVector.from_any([0.5, 0.5], 4)


class TestGenerator:
    def test_block_resolution_table_toy(self):
        assert block_resolutions(8, 64) == [4, 8, 8, 16, 16, 32, 32, 64]

    def test_block_resolution_table_full(self):
        res = block_resolutions(18, 1024)
        assert res[0] == 4
        assert res[-1] == 1024
        assert all(b in (a, 2 * a) for a, b in zip(res, res[1:]))

    def test_layer_count_must_reach_resolution(self):
        with pytest.raises(ValidationError):
            GeneratorModel(num_layers=2, resolution=64)

    def test_intrinsic_output_shape_and_bound(self, gen_tiny, cfg_tiny):
        code = map_latent(gen_tiny.mapping, rand_latent(cfg_tiny.d_latent, seed=9))
        img = synthesize_intrinsic(gen_tiny, LayerwiseLatent.broadcast(code, cfg_tiny.num_layers))
        assert img.shape == (3, 16, 16)
        assert img.min().item() >= -1.0 and img.max().item() <= 1.0

    def test_boundedness_many_latents(self, gen_tiny, cfg_tiny):
        z = rand_latent(cfg_tiny.d_latent, seed=10, batch=100)
        code = map_latent(gen_tiny.mapping, z)
        img = synthesize_intrinsic(gen_tiny, LayerwiseLatent.broadcast(code, cfg_tiny.num_layers))
        assert img.shape == (100, 3, 16, 16)
        assert img.min().item() >= -1.0 and img.max().item() <= 1.0

    def test_deterministic_build_and_output(self, cfg_tiny):
        g1 = build_generator(cfg_tiny, seed=21)
        g2 = build_generator(cfg_tiny, seed=21)
        z = rand_latent(cfg_tiny.d_latent, seed=11)
        lat = LayerwiseLatent.broadcast(map_latent(g1.mapping, z), cfg_tiny.num_layers)
        out1 = synthesize_intrinsic(g1, lat)
        out2 = synthesize_intrinsic(g2, lat)
        assert torch.equal(out1, out2)

    def test_different_seeds_differ(self, cfg_tiny):
        g1 = build_generator(cfg_tiny, seed=21)
        g2 = build_generator(cfg_tiny, seed=22)
        assert not torch.equal(g1.mapping.first.weight, g2.mapping.first.weight)

    def test_block_activation_shapes(self, gen_toy, cfg_toy):
        code = map_latent(gen_toy.mapping, rand_latent(cfg_toy.d_latent, seed=12))
        lat = LayerwiseLatent.broadcast(code, cfg_toy.num_layers)
        acts = block_activations(gen_toy, lat, k_max=cfg_toy.num_layers)
        expected_res = [4, 8, 8, 16, 16, 32, 32, 64]
        assert [a.shape[-1] for a in acts] == expected_res
        assert [a.shape[-2] for a in acts] == expected_res

    def test_block_activations_first_two_coarsest(self, gen_tiny, cfg_tiny):
        code = map_latent(gen_tiny.mapping, rand_latent(cfg_tiny.d_latent, seed=13))
        lat = LayerwiseLatent.broadcast(code, cfg_tiny.num_layers)
        acts = block_activations(gen_tiny, lat, k_max=2)
        assert len(acts) == 2
        assert acts[0].shape[-1] == 4 and acts[1].shape[-1] == 8

    def test_block_activations_deterministic(self, gen_tiny, cfg_tiny):
        code = map_latent(gen_tiny.mapping, rand_latent(cfg_tiny.d_latent, seed=14))
        lat = LayerwiseLatent.broadcast(code, cfg_tiny.num_layers)
        a1 = block_activations(gen_tiny, lat, 3)
        a2 = block_activations(gen_tiny, lat, 3)
        assert all(torch.equal(x, y) for x, y in zip(a1, a2))

    def test_block_activations_range_check(self, gen_tiny, cfg_tiny):
        code = map_latent(gen_tiny.mapping, rand_latent(cfg_tiny.d_latent, seed=15))
        lat = LayerwiseLatent.broadcast(code, cfg_tiny.num_layers)
        with pytest.raises(ValidationError):
            block_activations(gen_tiny, lat, 0)
        with pytest.raises(ValidationError):
            block_activations(gen_tiny, lat, cfg_tiny.num_layers + 1)

    def test_parameter_split_covers_everything(self, gen_tiny):
        intrinsic = {id(p) for p in gen_tiny.intrinsic_parameters()}
        extrinsic = {id(p) for p in gen_tiny.extrinsic_parameters()}
        everything = {id(p) for p in gen_tiny.parameters()}
        assert intrinsic | extrinsic == everything
        assert not intrinsic & extrinsic
