import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drsim import dataio, neuralgen
from drsim.neuralgen import CvaeConfig, EncoderOutput


def tiny_config(**kw):
    spec = dict(latent_dim=2, hidden=(8,), eta=2.0, learning_rate=3e-3,
                batch_size=16, max_epochs=60, patience=15, restarts=2, seed=0)
    spec.update(kw)
    return CvaeConfig(**spec)


def tiny_dataset(n=48, h=6, dx=2, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, dx))
    base = 0.3 + 0.4 * x[:, :1]
    y = base + 0.05 * rng.standard_normal((n, h)) + np.linspace(0, 0.2, h)
    partition = dataio.partition_days(n, 0.75, seed=1)
    return y, x, partition


class TestKlDivergence:
    def test_zero_at_standard_normal(self):
        out = EncoderOutput(np.zeros(4), np.zeros(4))
        assert neuralgen.kl_divergence(out) == 0.0

    def test_hand_oracle(self):
        out = EncoderOutput(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
        assert neuralgen.kl_divergence(out) == pytest.approx(0.5)
        out = EncoderOutput(np.array([0.0]), np.array([np.log(4.0)]))
        # 0.5 * (4 - 1 - log 4)
        assert neuralgen.kl_divergence(out) == pytest.approx(0.5 * (3.0 - np.log(4.0)))

    def test_batch_shape(self):
        out = EncoderOutput(np.zeros((5, 3)), np.zeros((5, 3)))
        assert neuralgen.kl_divergence(out).shape == (5,)

    @given(
        st.lists(st.floats(-3, 3), min_size=1, max_size=6),
        st.lists(st.floats(-3, 3), min_size=1, max_size=6),
    )
    @settings(max_examples=40, deadline=None)
    def test_nonnegative(self, mu, lv):
        size = min(len(mu), len(lv))
        out = EncoderOutput(np.array(mu[:size]), np.array(lv[:size]))
        assert neuralgen.kl_divergence(out) >= -1e-12  # rounding slack only

    def test_monte_carlo_cross_check(self, rng):
        mu = np.array([0.8, -0.5, 1.2])
        log_var = np.log(np.array([0.5, 2.0, 1.5]))
        closed = neuralgen.kl_divergence(EncoderOutput(mu, log_var))
        sigma = np.exp(log_var / 2.0)
        z = mu + sigma * rng.standard_normal((400_000, 3))
        log_q = -0.5 * (((z - mu) / sigma) ** 2).sum(axis=1) - np.log(sigma).sum()
        log_p = -0.5 * (z**2).sum(axis=1)
        assert closed == pytest.approx((log_q - log_p).mean(), rel=0.02)


class TestBuildingBlocks:
    def test_reparameterize_oracle(self):
        out = EncoderOutput(np.array([1.0, -1.0]), np.array([0.0, np.log(4.0)]))
        eps = np.array([0.5, 0.5])
        np.testing.assert_allclose(
            neuralgen.reparameterize(out, eps), [1.5, 0.0], atol=1e-12
        )

    def test_glorot_bounds(self, rng):
        w = neuralgen.glorot_uniform(20, 30, rng)
        limit = np.sqrt(6.0 / 50.0)
        assert w.shape == (20, 30)
        assert np.abs(w).max() <= limit
        assert w.std() > 0.1 * limit

    def test_dense_forward_oracle(self):
        layer = neuralgen.DenseLayer(np.array([[1.0, 2.0], [0.0, -1.0]]),
                                     np.array([0.5, 0.0]), "relu")
        net = neuralgen.DenseNet([layer])
        out = net.forward(np.array([[1.0, 1.0]]))
        np.testing.assert_allclose(out, [[3.5, 0.0]])

    def test_sigmoid_activation_range(self, rng):
        net = neuralgen.DenseNet.build([3, 4], ["sigmoid"], rng)
        out = net.forward(rng.normal(size=(10, 3)) * 50.0)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_unknown_activation_rejected(self):
        with pytest.raises(ValueError, match="activation"):
            neuralgen._activate("tanh", np.zeros(2))

    def test_adam_first_step_is_signed_learning_rate(self):
        params = [np.array([0.0, 0.0])]
        grads = [np.array([0.3, -2.0])]
        state = neuralgen.adam_init(params)
        neuralgen.adam_step(params, grads, state, lr=0.01)
        # bias corrections cancel on step one: p = -lr * g / (|g| + eps)
        expected = -0.01 * grads[0] / (np.abs(grads[0]) + 1e-8)
        np.testing.assert_allclose(params[0], expected, rtol=1e-12)

    def test_encoder_width_validation(self, rng):
        enc = neuralgen.DenseNet.build([8, 5], ["linear"], rng)
        with pytest.raises(ValueError, match="width"):
            neuralgen.encode(enc, 4, np.zeros((1, 6)), np.zeros((1, 2)))

    def test_encode_accepts_single_rows(self, rng):
        enc = neuralgen.DenseNet.build([8, 4], ["linear"], rng)
        out = neuralgen.encode(enc, 2, np.zeros(6), np.zeros(2))
        assert out.mu.shape == (1, 2) and out.log_var.shape == (1, 2)


class TestGradients:
    def test_backprop_matches_finite_differences(self):
        rng = np.random.default_rng(123)
        config = tiny_config(latent_dim=2, hidden=(5,), eta=3.0)
        encoder, decoder = neuralgen._build_nets(4, 3, config, rng)
        y = rng.uniform(0.2, 0.8, size=(7, 4))
        x = rng.uniform(size=(7, 3))
        eps = rng.standard_normal((7, 2))
        loss, grads = neuralgen.cvae_loss_and_grads(encoder, decoder, config, y, x, eps)
        params = encoder.params() + decoder.params()
        step = 1e-5
        for p, g in zip(params, grads):
            flat_p = p.ravel()
            flat_g = g.ravel()
            for idx in range(flat_p.size):
                orig = flat_p[idx]
                flat_p[idx] = orig + step
                up, _, _ = neuralgen.cvae_loss(encoder, decoder, config, y, x, eps)
                flat_p[idx] = orig - step
                down, _, _ = neuralgen.cvae_loss(encoder, decoder, config, y, x, eps)
                flat_p[idx] = orig
                fd = (up - down) / (2.0 * step)
                assert flat_g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7)

    def test_loss_pieces_consistent(self):
        rng = np.random.default_rng(7)
        config = tiny_config()
        encoder, decoder = neuralgen._build_nets(6, 2, config, rng)
        y = rng.uniform(size=(9, 6))
        x = rng.uniform(size=(9, 2))
        eps = rng.standard_normal((9, 2))
        loss, recon, kl = neuralgen.cvae_loss(encoder, decoder, config, y, x, eps)
        assert loss == pytest.approx(recon + config.eta * kl, rel=1e-12)
        loss2, _ = neuralgen.cvae_loss_and_grads(encoder, decoder, config, y, x, eps)
        assert loss2 == loss


class TestTraining:
    def test_training_learns_and_reports(self):
        y, x, partition = tiny_dataset()
        model = neuralgen.train_cvae(y, x, partition, tiny_config())
        assert np.isfinite(model.test_mse)
        assert len(model.restart_mses) == 2
        assert model.restart_index == int(np.argmin(model.restart_mses))
        assert model.test_mse == min(model.restart_mses)
        assert 0 < len(model.epoch_losses) <= 60
        # the loss should actually come down over training
        assert model.epoch_losses[-1] < model.epoch_losses[0]

    def test_training_determinism(self):
        y, x, partition = tiny_dataset(seed=3)
        config = tiny_config(restarts=1, max_epochs=20)
        a = neuralgen.train_cvae(y, x, partition, config)
        b = neuralgen.train_cvae(y, x, partition, config)
        for pa, pb in zip(a.encoder.params() + a.decoder.params(),
                          b.encoder.params() + b.decoder.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_scaling_bounds_from_train_split_only(self):
        y, x, partition = tiny_dataset()
        y = y.copy()
        test_day = int(partition.test[0])
        y[test_day] += 100.0  # extreme test day must not touch the bounds
        model = neuralgen.train_cvae(y, x, partition, tiny_config(restarts=1, max_epochs=5))
        assert model.y_max == y[partition.train].max()
        assert model.y_min == y[partition.train].min()

    def test_constant_training_data_raises(self):
        y, x, partition = tiny_dataset()
        with pytest.raises(neuralgen.TrainingError, match="degenerate"):
            neuralgen.train_cvae(np.ones_like(y), x, partition, tiny_config())

    def test_shape_mismatch_raises(self):
        y, x, partition = tiny_dataset()
        with pytest.raises(neuralgen.TrainingError):
            neuralgen.train_cvae(y, x[:-1], partition, tiny_config())

    def test_select_best_ties_to_lower_index(self):
        y, x, partition = tiny_dataset()
        config = tiny_config(restarts=1, max_epochs=3)
        model = neuralgen.train_cvae(y, x, partition, config)
        results = [
            (model.encoder, model.decoder, 0.5, [1.0], None),
            (model.encoder, model.decoder, 0.5, [1.0], None),
        ]
        picked = neuralgen.select_best(results, 0.0, 1.0, config)
        assert picked.restart_index == 0

    def test_select_best_all_failed_raises(self):
        with pytest.raises(neuralgen.TrainingError, match="every restart failed"):
            neuralgen.select_best(
                [(None, None, np.inf, [], "non-finite training loss")], 0.0, 1.0, tiny_config()
            )


@pytest.fixture(scope="module")
def model():
    y, x, partition = tiny_dataset()
    config = tiny_config(restarts=1, max_epochs=200, learning_rate=5e-3, patience=50)
    return neuralgen.train_cvae(y, x, partition, config)


class TestGenerate:
    def test_samples_within_training_bounds(self, model):
        draws = neuralgen.generate(model, np.array([0.5, 0.5]), 200, seed=0)
        assert draws.shape == (200, 6)
        assert draws.min() >= model.y_min and draws.max() <= model.y_max

    def test_seed_determinism(self, model):
        x = np.array([0.2, 0.8])
        a = neuralgen.generate(model, x, 16, seed=3)
        b = neuralgen.generate(model, x, 16, seed=3)
        c = neuralgen.generate(model, x, 16, seed=4)
        np.testing.assert_array_equal(a, b)
        assert (a != c).any()

    def test_zero_latent_scale_collapses(self, model):
        draws = neuralgen.generate(model, np.array([0.5, 0.5]), 8, seed=1, latent_scale=0.0)
        np.testing.assert_array_equal(draws, np.tile(draws[0], (8, 1)))

    def test_conditional_effect_learned(self, model):
        # training data had mean 0.3 + 0.4 * x[0]: the decoder must reflect it
        low = neuralgen.generate(model, np.array([0.05, 0.5]), 400, seed=5).mean()
        high = neuralgen.generate(model, np.array([0.95, 0.5]), 400, seed=5).mean()
        assert high - low > 0.15


class TestGridSearch:
    def test_records_and_best(self):
        y, x, partition = tiny_dataset()
        base = tiny_config(restarts=1, max_epochs=8)
        grid = {"latent_dim": [1, 2], "eta": [1.0]}
        best, records = neuralgen.hyperparameter_grid_search(y, x, partition, base, grid)
        assert len(records) == 2
        assert {c.latent_dim for c, _ in records} == {1, 2}
        mses = [m for _, m in records]
        assert best in [c for c, _ in records]
        assert records[int(np.argmin(mses))][0] == best

    def test_empty_grid_raises(self):
        y, x, partition = tiny_dataset()
        with pytest.raises(neuralgen.TrainingError, match="empty"):
            neuralgen.hyperparameter_grid_search(
                y, x, partition, tiny_config(), {"latent_dim": []}
            )


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        y, x, partition = tiny_dataset()
        model = neuralgen.train_cvae(y, x, partition, tiny_config(restarts=1, max_epochs=10))
        path = tmp_path / "cvae.npz"
        neuralgen.save_model(model, path)
        loaded = neuralgen.load_model(path)
        assert loaded.config == model.config
        assert loaded.y_min == model.y_min and loaded.y_max == model.y_max
        assert loaded.test_mse == model.test_mse
        xq = np.array([0.3, 0.7])
        np.testing.assert_array_equal(
            neuralgen.generate(loaded, xq, 12, seed=2),
            neuralgen.generate(model, xq, 12, seed=2),
        )

    def test_tampered_config_hash_rejected(self, tmp_path):
        import json

        y, x, partition = tiny_dataset()
        model = neuralgen.train_cvae(y, x, partition, tiny_config(restarts=1, max_epochs=4))
        path = tmp_path / "cvae.npz"
        neuralgen.save_model(model, path)
        with np.load(path, allow_pickle=False) as z:
            payload = {k: z[k] for k in z.files}
        meta = json.loads(str(payload["meta"]))
        meta["config"]["eta"] = 999.0
        payload["meta"] = np.array(json.dumps(meta))
        np.savez(path, **payload)
        with pytest.raises(neuralgen.TrainingError, match="hash"):
            neuralgen.load_model(path)
