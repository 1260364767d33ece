"""Reverse-mode gradients through the physical graph, Adam, and the train/evaluate loops.

Complex quantities are handled as pairs of reals. A complex gradient array ``g`` stores
``dL/dRe + j dL/dIm`` of the matching complex value, so a constant linear map ``y = A x``
pulls back as ``g_x = A^H g_y`` and a trainable phase ``u = e^{j theta} v`` gives
``dL/dtheta = Re(conj(g_u) * j u)``.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from relay_wpnn import model as mdl
from relay_wpnn.channels import draw_channels
from relay_wpnn.linalg import SeededRng, adjoint
from relay_wpnn.nonlinear import activation_vjp

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch via log-sum-exp; returns ``(loss, probs)``.

    A single logit vector with a scalar label is accepted as well.
    """
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = -np.mean(log_p[np.arange(len(labels)), labels])
    probs = np.exp(log_p)
    return float(loss), probs[0] if single else probs


# -- backward --------------------------------------------------------------------


def _normalize_vjp(y, scale, grad):
    # y = x / s, s = sqrt(mean |x|^2)
    n = y.shape[-1] * y.shape[-2]
    proj = np.sum(np.real(np.conj(grad) * y), axis=(-2, -1), keepdims=True)
    return (grad - y * proj / n) / scale


def _sim_backward(grad_x, w, phases, layer_caches, mode, act_params):
    """Returns (d_theta, d_bias, grad wrt the side's input)."""
    n_layers = len(phases)
    d_theta = np.zeros((n_layers, phases.shape[1]))
    d_bias = np.zeros((n_layers, phases.shape[1]), np.complex128)
    for l in reversed(range(n_layers)):
        lc = layer_caches[l]
        g_pre = activation_vjp(lc.pre, grad_x, mode, act_params)
        d_bias[l] = g_pre.sum(axis=(0, 2))
        g_phased = adjoint(w[2 * l + 1]) @ g_pre
        d_theta[l] = np.sum(np.real(np.conj(g_phased) * 1j * lc.phased), axis=(0, 2))
        g_v = np.conj(phases[l])[:, None] * g_phased
        first = w[2 * l]
        grad_x = g_v if first is None else adjoint(first) @ g_v
    return d_theta, d_bias, grad_x


def backward(cache, labels, params, fixed, config, probs=None):
    """Exact gradient of the mean cross-entropy with respect to every parameter.

    Returns a :class:`ModelParams`-shaped container; complex fields hold
    ``dL/dRe + j dL/dIm``.
    """
    mdl.check_params(params, config)
    labels = np.atleast_1d(labels)
    if cache.logits is None or len(cache.logits) != len(labels):
        raise ValueError("forward cache does not match the label batch")
    if probs is None:
        _, probs = softmax_cross_entropy(cache.logits, labels)
    batch = len(labels)
    g_logits = probs.copy()
    g_logits[np.arange(batch), labels] -= 1.0
    g_logits /= batch

    d_fc_w = g_logits.T @ cache.features
    d_fc_b = g_logits.sum(axis=0)
    g_feat = g_logits @ params.fc_weight
    half = g_feat.shape[1] // 2
    g_cols = g_feat[:, :half] + 1j * g_feat[:, half:]
    g_s_r = np.swapaxes(g_cols.reshape(batch, config.k, config.n_r), -1, -2)

    mode = mdl.activation_mode(config)
    g_x = adjoint(fixed.rx[-1]) @ g_s_r
    d_theta_r, d_b_r, g_x0 = _sim_backward(
        g_x, fixed.rx[:-1], params.phase_factors("r"), cache.rx_layers, mode, config.activation
    )

    d_z = np.zeros_like(params.z)
    d_b_s = np.zeros_like(params.b_s)
    if config.scheme.over_the_air:
        ch = cache.realization.channels
        g_s_s = adjoint(ch.g_r) @ g_x0
        if config.normalize_power:
            g_s_s = _normalize_vjp(cache.s_s, cache.scale_s, g_s_s)
        g_pre = activation_vjp(cache.relay_pre, g_s_s, mode, config.pa)
        d_z = np.sum(g_pre @ adjoint(cache.relay_in), axis=0)
        d_b_s = g_pre.sum(axis=(0, 2))
        g_in = adjoint(params.z) @ g_pre
        g_y = adjoint(ch.g_t_pinv) @ g_in if config.scheme.channel_processing else g_in
        g_s_t = adjoint(ch.g_t) @ g_y
        if config.normalize_power:
            g_s_t = _normalize_vjp(cache.s_t, cache.scale_t, g_s_t)
    else:
        g_s_t = g_x0

    d_theta_t, d_b_t, _ = _sim_backward(
        g_s_t, fixed.tx, params.phase_factors("t"), cache.tx_layers, mode, config.activation
    )
    grads = mdl.ModelParams(
        theta_t=d_theta_t, theta_r=d_theta_r, b_t=d_b_t, b_r=d_b_r,
        z=d_z, b_s=d_b_s, fc_weight=d_fc_w, fc_bias=d_fc_b,
    )
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for {name}")
    return grads


def loss_and_grad(images, labels, params, fixed, config, realization):
    logits, cache = mdl.forward(images, params, fixed, config, realization)
    loss, probs = softmax_cross_entropy(logits, labels)
    return loss, backward(cache, labels, params, fixed, config, probs=probs)


# -- optimizer -------------------------------------------------------------------


def _real_view(a):
    return a.view(np.float64) if np.iscomplexobj(a) else a


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def from_config(cls, train):
        return cls(lr=train.lr, beta1=train.beta1, beta2=train.beta2, eps=train.eps)


def adam_step(params, grads, state):
    """One bias-corrected Adam update on the real view of every parameter.

    Returns new parameters; phases are wrapped into [0, 2 pi) afterwards.
    """
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    new = params.copy()
    for name, value in new.items():
        g = _real_view(np.ascontiguousarray(getattr(grads, name)))
        if g.shape != _real_view(value).shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {_real_view(value).shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        _real_view(value)[...] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return mdl.wrap_phases(new)


# -- loops -----------------------------------------------------------------------


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_accuracy: float
    wall_seconds: float


def evaluate(params, config, images, labels, n_draws, seed, fixed=None, chunk=2000, channels=None):
    """Top-1 accuracy averaged over ``n_draws`` independent realizations.

    With ``channels`` given, every realization reuses that channel and only the noise is
    redrawn; otherwise each realization also draws a fresh channel, held across the whole
    set. Streams are rebuilt from ``seed`` on every call, so repeated calls agree exactly.
    """
    fixed = fixed or mdl.build_propagation(config)
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    root = SeededRng(seed)
    channel_rng, noise_rng = root.stream("eval-channel"), root.stream("eval-noise")
    draws = n_draws if config.scheme.over_the_air else 1
    accuracies = []
    for d in range(draws):
        ch = None
        if config.scheme.over_the_air:
            ch = channels if channels is not None else draw_channels(config, channel_rng, d)
        correct = 0
        for start in range(0, len(labels), chunk):
            batch = images[start:start + chunk]
            real = mdl.draw_realization(config, len(batch), channel_rng, noise_rng, ch, d)
            logits, _ = mdl.forward(batch, params, fixed, config, real)
            correct += int(np.sum(np.argmax(logits, axis=1) == labels[start:start + chunk]))
        accuracies.append(correct / len(labels))
    return float(np.mean(accuracies))


@dataclass
class TrainResult:
    params: mdl.ModelParams
    metrics: list
    losses: list
    channels: object = None  # the held channel under the "fixed" policy


def train(config, train_cfg, train_set, test_set, rng=None, params=None, on_epoch=None):
    """Mini-batch Adam on the mean cross-entropy.

    ``train_set`` / ``test_set`` are ``(images, labels)`` pairs. Under the ``"fixed"``
    channel policy one channel realization is drawn up front and used for training and
    evaluation alike; under ``"per_batch"`` every mini-batch gets a fresh one.
    """
    root = rng or SeededRng(train_cfg.seed)
    fixed = mdl.build_propagation(config)
    if params is None:
        params = mdl.init_params(config, root.stream("init"))
    mdl.check_params(params, config)
    shuffle_rng = root.stream("shuffle")
    channel_rng = root.stream("channel")
    noise_rng = root.stream("noise")
    state = AdamState.from_config(train_cfg)
    held = None
    if train_cfg.channel_policy == "fixed" and config.scheme.over_the_air:
        held = draw_channels(config, channel_rng)

    images, labels = train_set
    labels = np.asarray(labels)
    n = len(labels)
    metrics, losses = [], []
    for epoch in range(1, train_cfg.epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        epoch_loss, seen = 0.0, 0
        for b, start in enumerate(range(0, n, train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            real = mdl.draw_realization(config, len(idx), channel_rng, noise_rng, held)
            loss, grads = loss_and_grad(images[idx], labels[idx], params, fixed, config, real)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, batch {b}")
            params = adam_step(params, grads, state)
            losses.append(loss)
            epoch_loss += loss * len(idx)
            seen += len(idx)
        acc = evaluate(params, config, *test_set, train_cfg.eval_draws, train_cfg.seed,
                       fixed=fixed, chunk=train_cfg.eval_chunk, channels=held)
        row = EpochMetrics(epoch, epoch_loss / max(seen, 1), acc, time.perf_counter() - t0)
        metrics.append(row)
        log.info("epoch %d loss %.4f acc %.4f (%.1fs)", epoch, row.train_loss, acc, row.wall_seconds)
        if on_epoch is not None:
            on_epoch(row)
    return TrainResult(params, metrics, losses, held)
