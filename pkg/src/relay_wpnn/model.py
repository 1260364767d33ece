"""End-to-end physical forward pass: image -> AI-SIM encoder -> relay -> AI-SIM decoder -> logits.

All stage functions work on batches: signal matrices carry a leading batch axis,
``(B, rows, K)``. One channel realization is shared by the batch, noise is per sample.
"""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from relay_wpnn import geometry
from relay_wpnn.channels import ChannelDraw, draw_channels
from relay_wpnn.linalg import ConfigurationError, sample_complex_gaussian
from relay_wpnn.nonlinear import ActivationMode, activation_apply

TWO_PI = 2.0 * np.pi


@dataclass
class ModelParams:
    theta_t: np.ndarray  # (L, M) phases of the transmit-side passive layers
    theta_r: np.ndarray  # (L, M)
    b_t: np.ndarray  # (L, M) complex activation biases
    b_r: np.ndarray  # (L, M) complex
    z: np.ndarray  # (N_s, M) relay gain matrix; (N_s, N_s) without channel processing
    b_s: np.ndarray  # (N_s,) complex relay bias
    fc_weight: np.ndarray  # (classes, 2 N_r K)
    fc_bias: np.ndarray  # (classes,)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def items(self):
        return [(name, getattr(self, name)) for name in self.names()]

    def copy(self):
        return ModelParams(**{name: value.copy() for name, value in self.items()})

    def count(self):
        """Number of real trainable scalars (complex entries count twice)."""
        return sum(v.size * (2 if np.iscomplexobj(v) else 1) for _, v in self.items())

    def phase_factors(self, side):
        return np.exp(1j * (self.theta_t if side == "t" else self.theta_r))


def param_shapes(config):
    L, M = config.layers, config.m
    return {
        "theta_t": ((L, M), np.float64),
        "theta_r": ((L, M), np.float64),
        "b_t": ((L, M), np.complex128),
        "b_r": ((L, M), np.complex128),
        "z": ((config.n_s, config.relay_input_dim), np.complex128),
        "b_s": ((config.n_s,), np.complex128),
        "fc_weight": ((config.num_classes, 2 * config.n_r * config.k), np.float64),
        "fc_bias": ((config.num_classes,), np.float64),
    }


def parameter_count(config):
    return sum(math.prod(shape) * (2 if dt is np.complex128 else 1) for shape, dt in param_shapes(config).values())


def check_params(params, config):
    for name, (shape, dtype) in param_shapes(config).items():
        value = getattr(params, name)
        if value.shape != shape or value.dtype != dtype:
            raise ConfigurationError(
                f"parameter {name} has shape {value.shape}/{value.dtype}, config expects {shape}/{np.dtype(dtype)}"
            )


def init_params(config, rng):
    """Phases uniform on [0, 2 pi), zero biases, Z ~ CN(0, 1/fan_in), Glorot-uniform head."""
    L, M = config.layers, config.m
    theta_t = rng.uniform(0.0, TWO_PI, size=(L, M))
    theta_r = rng.uniform(0.0, TWO_PI, size=(L, M))
    fan_in = config.relay_input_dim
    z = sample_complex_gaussian((config.n_s, fan_in), 1.0 / fan_in, rng)
    n_feat = 2 * config.n_r * config.k
    limit = math.sqrt(6.0 / (n_feat + config.num_classes))
    fc_weight = rng.uniform(-limit, limit, size=(config.num_classes, n_feat))
    return ModelParams(
        theta_t=theta_t,
        theta_r=theta_r,
        b_t=np.zeros((L, M), np.complex128),
        b_r=np.zeros((L, M), np.complex128),
        z=z,
        b_s=np.zeros(config.n_s, np.complex128),
        fc_weight=fc_weight,
        fc_bias=np.zeros(config.num_classes),
    )


@dataclass
class FixedPropagation:
    """Deterministic near-field matrices. ``tx[i]`` is W_{i+1}^t, ``rx[i]`` is W_{i+1}^r.

    ``rx[0]`` is None when the relay fading lands directly on the first receive surface.
    """

    tx: list
    rx: list


def build_propagation(config):
    geom = config.geometry
    tx_layouts, rx_layouts = geometry.build_layouts(config, geom)
    tx = geometry.chain_matrices(tx_layouts, geom)
    rx = geometry.chain_matrices(rx_layouts, geom)
    if not config.scheme.over_the_air:
        # encoder's last activation layer feeds the decoder's first passive layer directly
        first = rx_layouts[1]
        src = geometry.upa(config.m, geom.element_spacing, first.offset - geom.inter_layer)
        rx[0] = geometry.diffraction_matrix(src, first, geom)
    elif config.rx_fading_to_surface:
        rx[0] = None
    return FixedPropagation(tx, rx)


# -- image packing ---------------------------------------------------------------


def pack_image(images, config):
    """Real pixels -> complex N_t x K matrices.

    Each image is flattened row-major (zero-padded to 2 N_t K values if needed); the first
    half of the values become real parts, the second half imaginary parts, each filled
    column-major into N_t x K. Accepts one image or a batch along the leading axis.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.size % config.pixels:
        raise ConfigurationError(
            f"images of shape {images.shape} do not hold whole {config.channels}x{config.height}x{config.width} images"
        )
    single = images.size == config.pixels and images.ndim <= (2 if config.channels == 1 else 3)
    flat = images.reshape(-1, config.pixels)
    if config.padding:
        flat = np.pad(flat, ((0, 0), (0, config.padding)))
    half = flat.shape[1] // 2
    shape = (flat.shape[0], config.k, config.n_t)
    re = flat[:, :half].reshape(shape).transpose(0, 2, 1)
    im = flat[:, half:].reshape(shape).transpose(0, 2, 1)
    out = re + 1j * im
    return out[0] if single else out


def unpack_image(s_c, config):
    """Inverse of :func:`pack_image` (padding dropped)."""
    s_c = np.asarray(s_c)
    batch = s_c.reshape(-1, config.n_t, config.k)
    re = batch.real.transpose(0, 2, 1).reshape(len(batch), -1)
    im = batch.imag.transpose(0, 2, 1).reshape(len(batch), -1)
    flat = np.concatenate([re, im], axis=1)[:, :config.pixels]
    shape = (config.channels, config.height, config.width) if config.channels > 1 else (config.height, config.width)
    if s_c.ndim == 2:
        return flat[0].reshape(shape)
    return flat.reshape((-1,) + shape)


# -- stages ----------------------------------------------------------------------


@dataclass
class SimLayerCache:
    phased: np.ndarray  # Theta W_{2l-1} X_{l-1}
    pre: np.ndarray  # W_{2l} Theta W_{2l-1} X_{l-1} + b 1^T


@dataclass
class ForwardCache:
    s_c: np.ndarray = None
    tx_layers: list = field(default_factory=list)
    s_t_raw: np.ndarray = None
    s_t: np.ndarray = None
    scale_t: np.ndarray = None
    realization: "Realization" = None
    y_t: np.ndarray = None
    relay_in: np.ndarray = None  # LS estimate, or Y_t itself without channel processing
    relay_pre: np.ndarray = None
    s_s_raw: np.ndarray = None
    s_s: np.ndarray = None
    scale_s: np.ndarray = None
    x0_r: np.ndarray = None
    rx_layers: list = field(default_factory=list)
    x_l_r: np.ndarray = None
    s_r: np.ndarray = None
    features: np.ndarray = None
    logits: np.ndarray = None


@dataclass(frozen=True)
class Realization:
    """Every stochastic quantity of one forward pass: channel draw and noise samples."""

    channels: ChannelDraw | None
    noise_t: np.ndarray | None  # (B, N_s, K)
    noise_r: np.ndarray | None  # (B, N_r, K)


def draw_noise(config, batch, rng):
    sigma2 = config.sigma2
    n_t = sample_complex_gaussian((batch, config.n_s, config.k), sigma2, rng)
    n_r = sample_complex_gaussian((batch, config.n_r, config.k), sigma2, rng)
    return n_t, n_r


def draw_realization(config, batch, channel_rng, noise_rng, channels=None, draw_id=0):
    if not config.scheme.over_the_air:
        return Realization(None, None, None)
    if channels is None:
        channels = draw_channels(config, channel_rng, draw_id)
    n_t, n_r = draw_noise(config, batch, noise_rng)
    return Realization(channels, n_t, n_r)


def activation_mode(config):
    return ActivationMode.RAPP_AMPLITUDE if config.scheme.nonlinear else ActivationMode.IDENTITY


def sim_forward(x, w, phases, biases, mode, act_params, layer_caches):
    """Cascade of passive-phase + activation layers; ``w`` holds W_1 .. W_2L of one side.

    X_l = act(W_{2l} Theta_l W_{2l-1} X_{l-1} + b_l 1^T).
    """
    for l in range(len(phases)):
        first = w[2 * l]
        v = x if first is None else first @ x
        phased = phases[l][:, None] * v
        pre = w[2 * l + 1] @ phased + biases[l][:, None]
        layer_caches.append(SimLayerCache(phased, pre))
        x = activation_apply(pre, mode, act_params)
    return x


def tx_sim_forward(s_c, params, fixed, config, cache):
    cache.s_c = s_c
    return sim_forward(s_c, fixed.tx, params.phase_factors("t"), params.b_t,
                       activation_mode(config), config.activation, cache.tx_layers)


def normalize_power(x):
    """Scale each matrix of the batch to unit mean power; returns (normalized, scale)."""
    x = np.asarray(x, dtype=np.complex128)
    scale = np.sqrt(np.mean(np.abs(x) ** 2, axis=(-2, -1), keepdims=True))
    scale = np.where(scale > 0, scale, 1.0)
    return x / scale, scale


def relay_forward(s_t, params, config, realization, cache):
    ch = realization.channels
    y_t = ch.g_t @ s_t + realization.noise_t
    relay_in = ch.g_t_pinv @ y_t if config.scheme.channel_processing else y_t
    pre = params.z @ relay_in + params.b_s[:, None]
    out = activation_apply(pre, activation_mode(config), config.pa)
    cache.y_t, cache.relay_in, cache.relay_pre, cache.s_s_raw = y_t, relay_in, pre, out
    if config.normalize_power:
        out, cache.scale_s = normalize_power(out)
    cache.s_s = out
    return out


def rx_sim_forward(x0, params, fixed, config, cache, noise_r=None):
    """Receive-side AI-SIM plus the final hop to the N_r antennas, S_r = W_{2L+1} X_L + N_r."""
    cache.x0_r = x0
    x = sim_forward(x0, fixed.rx[:-1], params.phase_factors("r"), params.b_r,
                    activation_mode(config), config.activation, cache.rx_layers)
    cache.x_l_r = x
    s_r = fixed.rx[-1] @ x
    if noise_r is not None:
        s_r = s_r + noise_r
    cache.s_r = s_r
    return s_r


def features_of(s_r):
    """concat(vec(Re S_r), vec(Im S_r)) per sample; vec stacks columns."""
    cols = np.swapaxes(s_r, -1, -2).reshape(s_r.shape[0], -1)
    return np.concatenate([cols.real, cols.imag], axis=1)


def classify_head(s_r, params, cache=None):
    feats = features_of(s_r)
    logits = feats @ params.fc_weight.T + params.fc_bias
    if cache is not None:
        cache.features, cache.logits = feats, logits
    return logits


def forward(images, params, fixed, config, realization, cache=None):
    """Full forward pass for a batch of images; returns ``(logits, cache)``."""
    cache = ForwardCache() if cache is None else cache
    cache.realization = realization
    s_c = pack_image(images, config)
    if s_c.ndim == 2:
        s_c = s_c[None]
    s_t = tx_sim_forward(s_c, params, fixed, config, cache)
    cache.s_t_raw = s_t
    if config.scheme.over_the_air:
        if config.normalize_power:
            s_t, cache.scale_t = normalize_power(s_t)
        cache.s_t = s_t
        s_s = relay_forward(s_t, params, config, realization, cache)
        x0 = realization.channels.g_r @ s_s
        s_r = rx_sim_forward(x0, params, fixed, config, cache, realization.noise_r)
    else:
        cache.s_t = s_t
        s_r = rx_sim_forward(s_t, params, fixed, config, cache)
    return classify_head(s_r, params, cache), cache


def end_to_end_linear_operator(params, fixed, config, realization):
    """For linear schemes: the affine map vec-complex S_c -> S_r as (operator, offset).

    S_r = A S_c + C 1^T (noise excluded). Only valid when no nonlinearity and no power
    normalization is active.
    """
    if config.scheme.nonlinear or (config.scheme.over_the_air and config.normalize_power):
        raise ConfigurationError("end-to-end operator exists only for linear, unnormalized chains")
    a = np.eye(config.n_t, dtype=np.complex128)
    c = np.zeros((config.n_t, 1), np.complex128)

    def affine(mat, bias=None):
        nonlocal a, c
        a = mat @ a
        c = mat @ c
        if bias is not None:
            c = c + bias[:, None]

    def sim(w, phases, biases):
        for l in range(len(phases)):
            if w[2 * l] is not None:
                affine(w[2 * l])
            affine(np.diag(phases[l]))
            affine(w[2 * l + 1], biases[l])

    sim(fixed.tx, params.phase_factors("t"), params.b_t)
    if config.scheme.over_the_air:
        ch = realization.channels
        affine(ch.g_t)
        if config.scheme.channel_processing:
            affine(ch.g_t_pinv)
        affine(params.z, params.b_s)
        affine(ch.g_r)
    sim(fixed.rx[:-1], params.phase_factors("r"), params.b_r)
    affine(fixed.rx[-1])
    return a, c


def materialized_phases(params):
    return [np.diag(f) for side in ("t", "r") for f in params.phase_factors(side)]


def wrap_phases(params):
    params.theta_t = np.mod(params.theta_t, TWO_PI)
    params.theta_r = np.mod(params.theta_r, TWO_PI)
    return params
