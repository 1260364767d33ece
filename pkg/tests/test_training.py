import math

import numpy as np
import pytest

from relay_wpnn import checkpoint
from relay_wpnn import model as mdl
from relay_wpnn import training
from relay_wpnn.config import ExperimentConfig, Scheme, TrainConfig
from relay_wpnn.gradcheck import check_gradients, tiny_config
from relay_wpnn.linalg import SeededRng
from relay_wpnn.training import AdamState, adam_step, evaluate, softmax_cross_entropy, train

from conftest import make_pattern_set


def _naive_ce(logits, labels):
    total = 0.0
    for row, y in zip(logits, labels):
        z = sum(math.exp(v) for v in row)
        total -= math.log(math.exp(row[y]) / z)
    return total / len(labels)


class TestCrossEntropy:
    def test_uniform_logits(self):
        loss, probs = softmax_cross_entropy(np.zeros(10), 3)
        assert loss == pytest.approx(math.log(10), abs=1e-12)
        np.testing.assert_allclose(probs, 0.1)

    def test_saturated(self):
        logits = np.full(10, -1000.0)
        logits[2] = 1000.0
        loss, _ = softmax_cross_entropy(logits, 2)
        assert 0 <= loss < 1e-12
        wrong, _ = softmax_cross_entropy(logits, 0)
        assert wrong == pytest.approx(2000.0)

    def test_naive_oracle(self):
        rng = np.random.default_rng(0)
        logits = rng.standard_normal((8, 10)) * 3
        labels = rng.integers(0, 10, 8)
        assert softmax_cross_entropy(logits, labels)[0] == pytest.approx(_naive_ce(logits, labels), rel=1e-12)


def _fixture(config, batch=5, seed=0):
    root = SeededRng(seed)
    params = mdl.init_params(config, root.stream("init"))
    fixed = mdl.build_propagation(config)
    real = mdl.draw_realization(config, batch, root.stream("channel"), root.stream("noise"))
    data_rng = root.stream("gradcheck-data")
    images = data_rng.uniform(0, 1, (batch, config.height, config.width))
    labels = data_rng.integers(0, 10, batch)
    return params, fixed, real, images, labels


class TestGradients:
    def test_head_closed_form(self):
        cfg = tiny_config()
        params, fixed, real, images, labels = _fixture(cfg)
        logits, cache = mdl.forward(images, params, fixed, cfg, real)
        _, grads = training.loss_and_grad(images, labels, params, fixed, cfg, real)
        p = np.exp(logits - logits.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        onehot = np.eye(10)[labels]
        np.testing.assert_allclose(grads.fc_weight, (p - onehot).T @ cache.features / len(labels), rtol=1e-10)
        np.testing.assert_allclose(grads.fc_bias, (p - onehot).mean(0), rtol=1e-10, atol=1e-15)

    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_finite_differences(self, scheme):
        res = check_gradients(tiny_config(scheme), seed=1)
        assert res.ok, res.failures[:5]
        assert res.checked > 50

    @pytest.mark.parametrize("scheme", [Scheme.RELAY_NONLINEAR, Scheme.NO_OTA_LINEAR])
    def test_finite_differences_two_layers(self, scheme):
        res = check_gradients(tiny_config(scheme, layers=2), seed=2)
        assert res.ok, res.failures[:5]

    def test_linear_theta_by_hand(self):
        # NoOtaLinear, L = 1: S_r = W3r Th_r W1r W2t Th_t W1t S_c, zero biases
        cfg = tiny_config(Scheme.NO_OTA_LINEAR)
        params, fixed, real, images, labels = _fixture(cfg)
        _, cache = mdl.forward(images, params, fixed, cfg, real)
        _, grads = training.loss_and_grad(images, labels, params, fixed, cfg, real)
        logits = cache.logits
        p = np.exp(logits - logits.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        g_feat = (p - np.eye(10)[labels]) @ params.fc_weight / len(labels)
        half = g_feat.shape[1] // 2
        g_sr = np.swapaxes((g_feat[:, :half] + 1j * g_feat[:, half:]).reshape(-1, cfg.k, cfg.n_r), 1, 2)
        w1t, w2t = fixed.tx
        w1r, w2r, w3r = fixed.rx
        ph_t, ph_r = params.phase_factors("t")[0], params.phase_factors("r")[0]
        u_t = w1t @ cache.s_c
        expected = np.zeros(cfg.m)
        for a in range(cfg.m):
            # dS_r / dtheta_t[a] = B_a j ph_t[a] e_a e_a^T u_t
            b = w3r @ w2r @ np.diag(ph_r) @ w1r @ w2t
            ds = b[:, a][None, :, None] * (1j * ph_t[a] * u_t[:, a, :])[:, None, :]
            expected[a] = np.sum(np.real(np.conj(g_sr) * ds))
        np.testing.assert_allclose(grads.theta_t[0], expected, rtol=1e-9, atol=1e-14)


class TestAdam:
    def _params(self):
        return mdl.init_params(tiny_config(), SeededRng(0).stream("init"))

    def _zeros(self, p):
        return mdl.ModelParams(**{k: np.zeros_like(v) for k, v in p.items()})

    def test_zero_gradient_no_change(self):
        p = self._params()
        new = adam_step(p, self._zeros(p), AdamState())
        for (name, a), (_, b) in zip(p.items(), new.items()):
            np.testing.assert_array_equal(a, b, err_msg=name)

    def test_first_step_magnitude(self):
        p = self._params()
        g = self._zeros(p)
        g.fc_bias[:] = np.linspace(-3, 3, 10) + 0.05
        g.z[...] = 2 - 5j
        new = adam_step(p, g, AdamState(lr=0.01))
        # bias-corrected first step is lr * g / (|g| + eps)
        np.testing.assert_allclose(new.fc_bias - p.fc_bias, -0.01 * np.sign(g.fc_bias), rtol=1e-6)
        np.testing.assert_allclose(new.z - p.z, -0.01 * (1 - 1j), rtol=1e-6)
        assert p.fc_bias[0] == 0  # inputs untouched

    def test_sign_symmetry(self):
        p = self._params()
        g = self._zeros(p)
        g.theta_r[...] = 0.7
        up = adam_step(p, g, AdamState())
        g.theta_r[...] = -0.7
        down = adam_step(p, g, AdamState())
        np.testing.assert_allclose(up.theta_r + down.theta_r - 2 * p.theta_r,
                                   np.round((up.theta_r + down.theta_r - 2 * p.theta_r) / (2 * np.pi)) * 2 * np.pi,
                                   atol=1e-12)

    def test_phase_wrapping(self):
        p = self._params()
        p.theta_t[...] = 2 * np.pi + 0.1
        new = adam_step(p, self._zeros(p), AdamState())
        np.testing.assert_allclose(new.theta_t, 0.1, atol=1e-12)
        p.theta_t[...] = -0.1
        assert np.all(adam_step(p, self._zeros(p), AdamState()).theta_t < 2 * np.pi)


def _two_class_set(rng, n, cfg):
    images, labels = make_pattern_set(rng, n, cfg.height, cfg.width, num_classes=2)
    return images, labels


SMALL = dict(n_t=2, n_s=2, n_r=2, m=4, height=4, width=6, snr_db=10.0)


class TestLoops:
    def test_zero_epochs_returns_init(self):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(0)
        data = _two_class_set(rng, 20, cfg)
        res = train(cfg, TrainConfig(epochs=0, seed=4), data, data)
        init = mdl.init_params(cfg, SeededRng(4).stream("init"))
        np.testing.assert_array_equal(res.params.theta_t, init.theta_t)
        assert res.metrics == [] and res.losses == []

    def test_loss_decreases(self):
        cfg = ExperimentConfig(scheme=Scheme.NO_OTA_NONLINEAR, **SMALL)
        rng = np.random.default_rng(1)
        tr, te = _two_class_set(rng, 200, cfg), _two_class_set(rng, 100, cfg)
        res = train(cfg, TrainConfig(epochs=5, batch_size=20, lr=0.01, seed=0), tr, te)
        assert res.metrics[-1].train_loss < res.metrics[0].train_loss

    def test_deterministic(self):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(2)
        tr, te = _two_class_set(rng, 60, cfg), _two_class_set(rng, 30, cfg)
        tc = TrainConfig(epochs=2, batch_size=16, seed=5, eval_draws=2)
        a, b = train(cfg, tc, tr, te), train(cfg, tc, tr, te)
        assert a.losses == b.losses
        assert [m.test_accuracy for m in a.metrics] == [m.test_accuracy for m in b.metrics]

    def test_per_batch_policy_runs(self):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(3)
        tr = _two_class_set(rng, 40, cfg)
        res = train(cfg, TrainConfig(epochs=1, batch_size=16, channel_policy="per_batch", eval_draws=1), tr, tr)
        assert res.channels is None and len(res.losses) == 3

    def test_untrained_is_near_chance(self):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(4)
        images = rng.uniform(size=(2000, 4, 6))
        labels = rng.integers(0, 10, 2000)
        params = mdl.init_params(cfg, SeededRng(0).stream("init"))
        acc = evaluate(params, cfg, images, labels, 3, seed=0)
        assert 0.05 < acc < 0.15

    def test_evaluate_repeatable(self):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(5)
        images, labels = _two_class_set(rng, 50, cfg)
        params = mdl.init_params(cfg, SeededRng(0).stream("init"))
        assert evaluate(params, cfg, images, labels, 4, 1) == evaluate(params, cfg, images, labels, 4, 1, chunk=7)

    def test_no_ota_single_draw(self):
        cfg = ExperimentConfig(scheme=Scheme.NO_OTA_LINEAR, **SMALL)
        rng = np.random.default_rng(6)
        images, labels = _two_class_set(rng, 50, cfg)
        params = mdl.init_params(cfg, SeededRng(0).stream("init"))
        assert evaluate(params, cfg, images, labels, 1, 0) == evaluate(params, cfg, images, labels, 10, 9)

    def test_checkpoint_preserves_accuracy(self, tmp_path):
        cfg = ExperimentConfig(**SMALL)
        rng = np.random.default_rng(7)
        tr, te = _two_class_set(rng, 60, cfg), _two_class_set(rng, 40, cfg)
        tc = TrainConfig(epochs=1, batch_size=16, seed=2, eval_draws=3)
        res = train(cfg, tc, tr, te)
        checkpoint.save(tmp_path / "m.ckpt", res.params, cfg, tc, seed=2, channels=res.channels)
        ck = checkpoint.load(tmp_path / "m.ckpt")
        acc = evaluate(ck.params, ck.config, *te, 3, 2, channels=ck.channels)
        assert acc == res.metrics[-1].test_accuracy

    def test_shuffle_order_independent_of_noise(self, monkeypatch):
        seen = {}

        def record(images, labels, params, fixed, config, realization):
            seen.setdefault(config.scheme, []).append(labels.copy())
            return 0.0, mdl.ModelParams(**{k: np.zeros_like(v) for k, v in params.items()})

        monkeypatch.setattr(training, "loss_and_grad", record)
        rng = np.random.default_rng(8)
        base = ExperimentConfig(**SMALL)
        tr = (rng.uniform(size=(50, 4, 6)), np.arange(50) % 10)
        tc = TrainConfig(epochs=2, batch_size=8, seed=3, eval_draws=1)
        for scheme in (Scheme.RELAY_NONLINEAR, Scheme.NO_OTA_NONLINEAR):
            train(base.replace(scheme=scheme), tc, tr, tr)
        a, b = seen[Scheme.RELAY_NONLINEAR], seen[Scheme.NO_OTA_NONLINEAR]
        assert len(a) == len(b)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_divergence_reported(self, monkeypatch):
        monkeypatch.setattr(training, "loss_and_grad", lambda *a: (float("nan"), None))
        cfg = ExperimentConfig(**SMALL)
        tr = (np.zeros((4, 4, 6)), np.zeros(4, int))
        with pytest.raises(training.TrainingDivergedError, match="epoch 1, batch 0"):
            train(cfg, TrainConfig(epochs=1, batch_size=4), tr, tr)
