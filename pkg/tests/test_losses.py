import copy
import math

import numpy as np
import pytest
import torch
from torch import nn

from fistnet.errors import ValidationError
from fistnet.generator_core import (
    LayerwiseLatent, build_generator, map_latent,
)
from fistnet.losses import (
    Discriminator, PerceptualFeatureNet, StructuralLossConfig,
    adversarial_loss, content_loss, contextual_term, modres_l2,
    non_saturating_gen_loss, perceptual_loss, structural_loss, style_loss,
)

from conftest import rand_image, rand_latent, tiny_config


class FixedDisc(nn.Module):
    """Maps each batch element to a preset probability, ignoring pixels."""

    def __init__(self, probs):
        super().__init__()
        self.probs = torch.as_tensor(probs, dtype=torch.float32)

    def forward(self, img):
        return self.probs[: img.shape[0]]


@pytest.fixture
def pnet():
    return PerceptualFeatureNet(seed=70)


class TestStructural:
    def test_identical_generators_zero(self, cfg_tiny):
        base = build_generator(cfg_tiny, seed=80)
        transfer = copy.deepcopy(base)
        z = rand_latent(cfg_tiny.d_latent, seed=81)
        lat = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z), cfg_tiny.num_layers)
        loss = structural_loss(base, transfer, lat, StructuralLossConfig())
        assert loss.detach().item() == 0.0

    def test_default_compares_two_blocks(self):
        assert StructuralLossConfig().num_blocks == 2

    def test_constant_offset_gives_squared_value(self, cfg_tiny, monkeypatch):
        # activations differing by a constant 2 must give exactly 4
        base = build_generator(cfg_tiny, seed=80)
        transfer = copy.deepcopy(base)
        import fistnet.losses as losses_mod

        real_acts = losses_mod.block_activations

        def shifted(gen, lat, k):
            acts = real_acts(gen, lat, k)
            if gen is transfer:
                acts = [a + 2.0 for a in acts]
            return acts

        monkeypatch.setattr(losses_mod, "block_activations", shifted)
        z = rand_latent(cfg_tiny.d_latent, seed=82)
        lat = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z), cfg_tiny.num_layers)
        loss = structural_loss(base, transfer, lat, StructuralLossConfig(num_blocks=1))
        assert loss.detach().item() == pytest.approx(4.0, abs=1e-5)

    def test_architecture_mismatch(self, cfg_tiny):
        base = build_generator(cfg_tiny, seed=80)
        other = build_generator(tiny_config(num_layers=6, resolution=32), seed=80)
        z = rand_latent(cfg_tiny.d_latent, seed=83)
        lat = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z), cfg_tiny.num_layers)
        with pytest.raises(ValidationError):
            structural_loss(base, other, lat, StructuralLossConfig())

    def test_block_count_validated(self, cfg_tiny):
        base = build_generator(cfg_tiny, seed=80)
        transfer = copy.deepcopy(base)
        z = rand_latent(cfg_tiny.d_latent, seed=84)
        lat = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z), cfg_tiny.num_layers)
        with pytest.raises(ValidationError):
            structural_loss(base, transfer, lat,
                            StructuralLossConfig(num_blocks=cfg_tiny.num_layers + 1))


class TestAdversarial:
    def test_constant_half_discriminator(self):
        disc = FixedDisc([0.5, 0.5])
        fake, real = rand_image(16, seed=85, batch=2), rand_image(16, seed=86, batch=2)
        gen_term, disc_term = adversarial_loss(disc, fake, real)
        assert disc_term.detach().item() == pytest.approx(2.0 * math.log(0.5), abs=1e-6)
        assert gen_term.detach().item() == pytest.approx(math.log(0.5), abs=1e-6)

    def test_perfect_discriminator_approaches_zero_from_below(self):
        disc_good = FixedDisc([0.999999, 0.999999])
        fake, real = rand_image(16, seed=87, batch=2), rand_image(16, seed=88, batch=2)

        class SplitDisc(nn.Module):
            """High on the real batch, low on the fake batch."""

            def forward(self, img):
                key = img.sum().item()
                return torch.full((img.shape[0],), self.table[key])

        sd = SplitDisc()
        sd.table = {fake.sum().item(): 1e-6, real.sum().item(): 1.0 - 1e-6}
        _, disc_term = adversarial_loss(sd, fake, real)
        v = disc_term.detach().item()
        assert v < 0.0
        assert v > -1e-4

    def test_hand_fixed_batch_arithmetic(self):
        # D(real) = (0.9, 0.8), D(fake) = (0.1, 0.2)
        fake, real = rand_image(16, seed=89, batch=2), rand_image(16, seed=90, batch=2)

        class TableDisc(nn.Module):
            def __init__(self):
                super().__init__()
                self.calls = 0

            def forward(self, img):
                self.calls += 1
                if self.calls == 1:     # fake batch comes first
                    return torch.tensor([0.1, 0.2])
                return torch.tensor([0.9, 0.8])

        gen_term, disc_term = adversarial_loss(TableDisc(), fake, real)
        expected_gen = (math.log(0.9) + math.log(0.8)) / 2
        expected_obj = expected_gen + (math.log(0.9) + math.log(0.8)) / 2
        assert gen_term.detach().item() == pytest.approx(expected_gen, abs=1e-6)
        assert disc_term.detach().item() == pytest.approx(expected_obj, abs=1e-6)

    def test_disc_loss_improves_as_outputs_sharpen(self):
        # the discriminator's minimized quantity is the negated objective
        fake, real = rand_image(16, seed=91, batch=1), rand_image(16, seed=92, batch=1)
        losses = []
        for p in (0.5, 0.7, 0.9, 0.99):
            class P(nn.Module):
                def __init__(self, p):
                    super().__init__()
                    self.calls, self.p = 0, p

                def forward(self, img):
                    self.calls += 1
                    return torch.tensor([1.0 - self.p if self.calls == 1 else self.p])

            _, disc_term = adversarial_loss(P(p), fake, real)
            losses.append(-disc_term.detach().item())
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_empty_batch_rejected(self):
        disc = Discriminator(seed=93)
        with pytest.raises(ValidationError):
            adversarial_loss(disc, torch.zeros(0, 3, 16, 16), rand_image(16, batch=1))

    def test_real_discriminator_output_range(self):
        disc = Discriminator(seed=94)
        p = disc(rand_image(16, seed=95, batch=4))
        assert p.shape == (4,)
        assert (p > 0).all() and (p < 1).all()

    def test_non_saturating_variant(self):
        fake = rand_image(16, seed=96, batch=2)
        loss = non_saturating_gen_loss(FixedDisc([0.25, 0.25]), fake)
        assert loss.detach().item() == pytest.approx(-math.log(0.25), abs=1e-6)


class TestPerceptual:
    def test_equal_images_zero(self, pnet):
        a = rand_image(16, seed=97)
        assert perceptual_loss(pnet, a, a.clone()).item() == 0.0

    def test_symmetry(self, pnet):
        a, b = rand_image(16, seed=98), rand_image(16, seed=99)
        ab = perceptual_loss(pnet, a, b).item()
        ba = perceptual_loss(pnet, b, a).item()
        assert ab == pytest.approx(ba, rel=1e-6)

    def test_matches_feature_dump_oracle(self, pnet):
        a, b = rand_image(16, seed=100), rand_image(16, seed=101)
        fa = [f.detach().numpy() for f in pnet.features(a)]
        fb = [f.detach().numpy() for f in pnet.features(b)]
        expected = sum(float(np.mean((x - y) ** 2)) for x, y in zip(fa, fb))
        got = perceptual_loss(pnet, a, b).item()
        assert got == pytest.approx(expected, rel=1e-5)

    def test_shape_mismatch(self, pnet):
        with pytest.raises(ValidationError):
            perceptual_loss(pnet, rand_image(16), rand_image(32))


class TestContent:
    def test_equal_zero(self, pnet):
        a = rand_image(16, seed=102)
        assert content_loss(pnet, a, a.clone()).item() == 0.0

    def test_non_negative(self, pnet):
        for s in range(5):
            a, b = rand_image(16, seed=200 + s), rand_image(16, seed=300 + s)
            assert content_loss(pnet, a, b).item() >= 0.0

    def test_matches_deepest_scale_oracle(self, pnet):
        a, b = rand_image(16, seed=103), rand_image(16, seed=104)
        fa = pnet.features(a)[-1].detach().numpy()
        fb = pnet.features(b)[-1].detach().numpy()
        expected = float(np.mean((fa - fb) ** 2))
        assert content_loss(pnet, a, b).item() == pytest.approx(expected, rel=1e-5)


class TestStyle:
    def test_equal_images_exactly_zero(self, pnet):
        a = rand_image(16, seed=105)
        assert style_loss(pnet, a, a.clone()).item() == 0.0

    def test_constant_equal_images_zero_matching(self, pnet):
        a = torch.full((3, 16, 16), 0.25)
        assert style_loss(pnet, a, a.clone()).item() == 0.0

    def test_contextual_hand_oracle(self):
        # 2x2 features, 1 channel: patches are scalars; exhaustive table
        fa = torch.tensor([[[1.0, 2.0], [3.0, 4.0]]])
        fb = torch.tensor([[[2.0, 2.0], [5.0, 1.0]]])
        h = 0.5
        # normalized scalar patches are all sign(x) = 1, so every distance
        # is 0 and every affinity is 1 -> term is exactly 0
        assert contextual_term(fa, fb, h).item() == 0.0

    def test_contextual_hand_oracle_two_channels(self):
        # 2 channels x 2 patches with hand-set vectors; recompute the
        # max-affinity table in numpy
        fa = torch.tensor([[[1.0, 0.0]], [[0.0, 1.0]]])   # patches (1,0), (0,1)
        fb = torch.tensor([[[1.0, 1.0]], [[0.0, -1.0]]])  # patches (1,0)... see below
        h = 0.5
        a = fa.reshape(2, -1).T.numpy()
        b = fb.reshape(2, -1).T.numpy()
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
        b = b / np.linalg.norm(b, axis=1, keepdims=True)
        best = []
        for pa in a:
            aff = [np.exp(-np.sum((pa - pb) ** 2) / (2 * h)) for pb in b]
            best.append(max(aff))
        expected = -math.log(float(np.mean(best)))
        got = contextual_term(fa, fb, h).item()
        assert got == pytest.approx(expected, rel=1e-5)

    def test_shape_mismatch(self, pnet):
        with pytest.raises(ValidationError):
            style_loss(pnet, rand_image(16), rand_image(32))


class TestModResL2:
    def test_all_zero(self, cfg_tiny):
        gen = build_generator(cfg_tiny, seed=106)
        for block in gen.modres:
            block.initialize_zero()
        assert modres_l2(gen).item() == 0.0

    def test_hand_set_filters(self, cfg_tiny):
        gen = build_generator(cfg_tiny, seed=107)
        for block in gen.modres:
            block.initialize_zero()
        with torch.no_grad():
            gen.modres[0].conv1.weight[0, 0, 0, 0] = 1.0
            gen.modres[1].conv2.weight[0, 0, 0, 0] = 2.0
        assert modres_l2(gen).item() == pytest.approx(5.0, abs=1e-6)

    def test_identity_init_contributes_per_center_taps(self, cfg_tiny):
        # center-tap identity has exactly one unit weight per channel
        gen = build_generator(cfg_tiny, seed=108)
        for block in gen.modres:
            block.initialize_identity()
        expected = float(sum(gen.channels))
        assert modres_l2(gen).item() == pytest.approx(expected, abs=1e-5)


class TestGradients:
    """Central finite differences vs autograd, float64, 8-element probes."""

    TOL = 1e-3

    def fd_check(self, loss_fn, probe: torch.Tensor, eps=1e-5):
        probe = probe.detach().clone().requires_grad_(True)
        loss = loss_fn(probe)
        grad, = torch.autograd.grad(loss, probe)
        flat_grad = grad.flatten()
        g = torch.Generator().manual_seed(0)
        idx = torch.randperm(flat_grad.numel(), generator=g)[:8]
        for i in idx.tolist():
            plus = probe.detach().clone().flatten()
            plus[i] += eps
            minus = probe.detach().clone().flatten()
            minus[i] -= eps
            lp = loss_fn(plus.reshape(probe.shape)).detach().item()
            lm = loss_fn(minus.reshape(probe.shape)).detach().item()
            fd = (lp - lm) / (2 * eps)
            an = flat_grad[i].item()
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom < self.TOL, f"index {i}: fd={fd} analytic={an}"

    def test_perceptual_gradient(self):
        net = PerceptualFeatureNet(seed=70).double()
        b = rand_image(8, seed=110).double()
        self.fd_check(lambda a: perceptual_loss(net, a, b), rand_image(8, seed=111).double())

    def test_content_gradient(self):
        net = PerceptualFeatureNet(seed=70).double()
        b = rand_image(8, seed=112).double()
        self.fd_check(lambda a: content_loss(net, a, b), rand_image(8, seed=113).double())

    def test_style_gradient(self):
        net = PerceptualFeatureNet(seed=70).double()
        b = rand_image(8, seed=114).double()
        self.fd_check(lambda a: style_loss(net, a, b), rand_image(8, seed=115).double())

    def test_adversarial_gradient(self):
        disc = Discriminator(seed=116).double()
        real = rand_image(8, seed=117, batch=2).double()

        def gen_side(fake):
            gen_term, _ = adversarial_loss(disc, fake, real)
            return gen_term

        self.fd_check(gen_side, rand_image(8, seed=118, batch=2).double())

    def test_structural_gradient(self):
        cfg = tiny_config()
        base = build_generator(cfg, seed=119).double()
        transfer = build_generator(cfg, seed=120).double()
        z = rand_latent(cfg.d_latent, seed=121).double()
        lat = LayerwiseLatent.broadcast(
            map_latent(base.mapping, z).detach(), cfg.num_layers)
        target = transfer.blocks[0].conv.weight

        def functional(w):
            with torch.no_grad():
                target.copy_(w)
            return structural_loss(base, transfer, lat, StructuralLossConfig())

        loss = structural_loss(base, transfer, lat, StructuralLossConfig())
        grad, = torch.autograd.grad(loss, target)
        flat = grad.flatten()
        g = torch.Generator().manual_seed(1)
        idx = torch.randperm(flat.numel(), generator=g)[:8]
        eps = 1e-5
        for i in idx.tolist():
            w0 = target.detach().clone()
            wp = w0.clone().flatten()
            wp[i] += eps
            wm = w0.clone().flatten()
            wm[i] -= eps
            lp = functional(wp.reshape(w0.shape)).detach().item()
            lm = functional(wm.reshape(w0.shape)).detach().item()
            with torch.no_grad():
                target.copy_(w0)
            fd = (lp - lm) / (2 * eps)
            an = flat[i].item()
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom < self.TOL

    def test_modres_l2_gradient(self):
        cfg = tiny_config()
        gen = build_generator(cfg, seed=122).double()
        target = gen.modres[0].conv1.weight
        loss = modres_l2(gen)
        grad, = torch.autograd.grad(loss, target)
        # analytic gradient of sum of squares is 2w
        assert torch.allclose(grad, 2.0 * target.detach(), rtol=1e-10)
