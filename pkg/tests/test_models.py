"""Imputer model contracts: composition, losses, gradients, checkpoints."""

import math

import numpy as np
import pytest

import missaug.autodiff as ad
from missaug import models
from missaug.errors import ConfigError, ShapeError

from fd import check_model_gradients


def toy_batch(n=8, d=4, seed=0, rate=0.4):
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    m = (rng.random((n, d)) >= rate).astype(np.float64)
    return x, m, rng


class TestCompose:
    def test_hand_example(self):
        x = np.array([[0.2, 0.4]])
        m = np.array([[1.0, 0.0]])
        g = np.array([[0.9, 0.7]])
        assert np.array_equal(models.compose_imputation(x, m, g), [[0.2, 0.7]])

    def test_full_mask_returns_data_exactly(self):
        x, _, _ = toy_batch()
        g = np.random.default_rng(1).random(x.shape)
        assert np.array_equal(models.compose_imputation(x, np.ones_like(x), g), x)

    def test_empty_mask_returns_generator_exactly(self):
        x, _, _ = toy_batch()
        g = np.random.default_rng(2).random(x.shape)
        assert np.array_equal(models.compose_imputation(x, np.zeros_like(x), g), g)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            models.compose_imputation(np.zeros((2, 2)), np.zeros((2, 3)),
                                      np.zeros((2, 2)))

    def test_node_version_matches_and_masks_gradient(self):
        x, m, _ = toy_batch()
        g = ad.param(np.random.default_rng(3).random(x.shape))
        out = models.compose_node(x, m, g)
        assert np.array_equal(out.value, models.compose_imputation(x, m, g.value))
        ad.backward(ad.reduce_sum(out))
        # observed slots contribute nothing through the generator
        assert np.array_equal(g.grad, 1.0 - m)


class TestMlp:
    def test_widths_and_activations(self):
        d = 5
        model = models.build_model("dae", d, seed=0)
        shapes = [p.value.shape for p in model.params[::2]]
        assert shapes == [(2 * d, 2 * d + 7), (2 * d + 7, 2 * d + 14),
                          (2 * d + 14, 2 * d + 7), (2 * d + 7, d)]
        assert all(np.array_equal(b.value, np.zeros_like(b.value))
                   for b in model.params[1::2])

    def test_gain_widths(self):
        d = 5
        model = models.build_model("gain", d, seed=0)
        for net in (model.gen, model.disc):
            shapes = [p.value.shape for p in net.params[::2]]
            assert shapes == [(2 * d, 2 * d), (2 * d, d), (d, d)]

    def test_forward_array_matches_tape_bitwise(self):
        x, m, _ = toy_batch()
        for kind in ("dae", "gain"):
            model = models.build_model(kind, x.shape[1], seed=4)
            tape = model.generator_node(x * m, m).value
            arr = model.impute_raw(x * m, m)
            assert np.array_equal(tape, arr)

    def test_outputs_in_unit_interval(self):
        x, m, _ = toy_batch(seed=5)
        for kind in ("dae", "gain"):
            model = models.build_model(kind, x.shape[1], seed=5)
            out = model.impute_raw(x * m, m)
            assert out.shape == x.shape
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_init_deterministic_in_seed(self):
        a = models.build_model("gain", 4, seed=9)
        b = models.build_model("gain", 4, seed=9)
        for pa, pb in zip(a.params + a.disc_params, b.params + b.disc_params):
            assert np.array_equal(pa.value, pb.value)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            models.build_model("vae", 4, seed=0)


class TestDae:
    def test_loss_with_no_corruption_is_plain_mse(self):
        x, _, _ = toy_batch(seed=6)
        m = np.ones_like(x)
        keep = np.ones_like(x)
        model = models.build_model("dae", x.shape[1], seed=6)
        loss = models.dae_loss(model, x, m, keep)
        g = model.impute_raw(x, m)
        assert abs(float(loss.value) - np.mean((g - x) ** 2)) < 1e-12

    def test_loss_counts_only_kept_entries(self):
        x, m, _ = toy_batch(seed=7)
        keep = np.zeros_like(x)
        keep[0, 0] = 1.0
        model = models.build_model("dae", x.shape[1], seed=7)
        loss = models.dae_loss(model, x, m, keep)
        m_kept = m * keep
        g = model.impute_raw(x * m_kept, m_kept)
        expect = float((m_kept * (g - x) ** 2).sum()) / max(m_kept.sum(), 1.0)
        assert abs(float(loss.value) - expect) < 1e-12

    def test_all_missing_batch_gives_zero_loss(self):
        x, _, rng = toy_batch(seed=8)
        m = np.zeros_like(x)
        model = models.build_model("dae", x.shape[1], seed=8)
        draws = model.draw_noise(rng, x.shape)
        loss = model.ori_loss(x, m, draws)
        assert float(loss.value) == 0.0

    def test_gradients_match_finite_differences(self):
        x, m, rng = toy_batch(n=5, d=3, seed=10)
        model = models.build_model("dae", 3, seed=10)
        keep = (rng.random(x.shape) >= 0.5).astype(np.float64)
        check_model_gradients(lambda: models.dae_loss(model, x, m, keep),
                              model.params)

    def test_one_small_step_descends(self):
        x, m, rng = toy_batch(n=16, d=4, seed=11)
        model = models.build_model("dae", 4, seed=11)
        keep = (rng.random(x.shape) >= 0.5).astype(np.float64)
        opt = ad.Adam(model.params, lr=1e-4)
        loss = models.dae_loss(model, x, m, keep)
        ad.backward(loss)
        ad.clip_global_norm(model.params)
        opt.step()
        after = models.dae_loss(model, x, m, keep)
        assert float(after.value) < float(loss.value)

    def test_corruption_draw_is_seed_deterministic(self):
        model = models.build_model("dae", 4, seed=0)
        a = model.draw_noise(np.random.default_rng(3), (5, 4))
        b = model.draw_noise(np.random.default_rng(3), (5, 4))
        assert np.array_equal(a["keep"], b["keep"])


class TestGainPieces:
    def test_hint_values(self):
        _, m, rng = toy_batch(seed=12)
        reveal = (rng.random(m.shape) < 0.9).astype(np.float64)
        hint = models.gain_hint(m, reveal)
        assert set(np.unique(hint)).issubset({0.0, 0.5, 1.0})
        assert np.array_equal(hint[reveal == 1.0], m[reveal == 1.0])
        assert (hint[reveal == 0.0] == 0.5).all()

    def test_discriminator_loss_perfect_prediction(self):
        _, m, rng = toy_batch(seed=13)
        reveal = (rng.random(m.shape) < 0.9).astype(np.float64)
        hint = models.gain_hint(m, reveal)
        loss = models.gain_discriminator_loss(ad.constant(m), m, hint)
        assert abs(float(loss.value)) < 2e-7

    def test_discriminator_loss_coin_flip_is_log2(self):
        _, m, rng = toy_batch(seed=14)
        reveal = (rng.random(m.shape) < 0.9).astype(np.float64)
        hint = models.gain_hint(m, reveal)
        loss = models.gain_discriminator_loss(
            ad.constant(np.full(m.shape, 0.5)), m, hint)
        assert abs(float(loss.value) - math.log(2.0)) < 1e-12

    def test_discriminator_loss_ignores_revealed_entries(self):
        # flipping D's value at a revealed (weight 0) entry leaves loss alone
        _, m, rng = toy_batch(seed=15)
        reveal = np.ones_like(m)
        reveal[0, 0] = 0.0
        hint = models.gain_hint(m, reveal)
        p = np.full(m.shape, 0.4)
        base = float(models.gain_discriminator_loss(ad.constant(p), m, hint).value)
        p2 = p.copy()
        p2[1, 1] = 0.9
        again = float(models.gain_discriminator_loss(ad.constant(p2), m, hint).value)
        assert base == again

    def test_generator_loss_gradients_match_finite_differences(self):
        x, m, rng = toy_batch(n=5, d=3, seed=16)
        model = models.build_model("gain", 3, seed=16)
        draws = model.draw_noise(rng, x.shape)
        check_model_gradients(
            lambda: models.gain_generator_loss(model, x, m, draws),
            model.params + model.disc_params)

    def test_discriminator_loss_gradients_match_finite_differences(self):
        x, m, rng = toy_batch(n=5, d=3, seed=17)
        model = models.build_model("gain", 3, seed=17)
        draws = model.draw_noise(rng, x.shape)
        x_hat = models.compose_imputation(
            x, m, model.impute_raw(model.fill(x, m, draws), m))
        hint = models.gain_hint(m, draws["reveal"])
        d_in = np.concatenate((x_hat, hint), axis=1)

        def build():
            d_prob = model.disc.forward_node(ad.constant(d_in))
            return models.gain_discriminator_loss(d_prob, m, hint)

        check_model_gradients(build, model.disc_params)

    def test_adversary_step_updates_discriminator_only(self):
        x, m, rng = toy_batch(seed=18)
        model = models.build_model("gain", x.shape[1], seed=18)
        gen_before = [p.value.copy() for p in model.params]
        disc_before = [p.value.copy() for p in model.disc_params]
        opt = ad.Adam(model.disc_params, lr=1e-3)
        loss = model.adversary_step(x, m, model.draw_noise(rng, x.shape), opt, 5.0)
        assert isinstance(loss, float) and math.isfinite(loss)
        assert all(np.array_equal(a, p.value)
                   for a, p in zip(gen_before, model.params))
        assert any(not np.array_equal(a, p.value)
                   for a, p in zip(disc_before, model.disc_params))


class TestImputationAndCheckpoints:
    @pytest.mark.parametrize("kind", ["dae", "gain"])
    def test_observed_entries_preserved_exactly(self, kind):
        x, m, rng = toy_batch(seed=19)
        model = models.build_model(kind, x.shape[1], seed=19)
        out = model.imputation_array(x, m, model.eval_draws(rng, x.shape))
        obs = m == 1.0
        assert np.array_equal(out[obs], x[obs])
        assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("kind", ["dae", "gain"])
    def test_checkpoint_round_trip_bit_exact(self, kind, tmp_path):
        x, m, rng = toy_batch(seed=20)
        model = models.build_model(kind, x.shape[1], seed=20)
        path = tmp_path / f"{kind}.npz"
        models.save_checkpoint(model, path)
        clone = models.load_checkpoint(path)
        params = model.params + (model.disc_params if kind == "gain" else [])
        clone_params = clone.params + (clone.disc_params if kind == "gain" else [])
        for a, b in zip(params, clone_params):
            assert np.array_equal(a.value, b.value)
        draws = model.eval_draws(np.random.default_rng(21), x.shape)
        assert np.array_equal(model.imputation_array(x, m, draws),
                              clone.imputation_array(x, m, draws))

    def test_impute_raw_rejects_wrong_width(self):
        model = models.build_model("dae", 4, seed=0)
        with pytest.raises(ShapeError):
            model.impute_raw(np.zeros((3, 5)), np.zeros((3, 5)))
