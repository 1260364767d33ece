"""Far-field Rayleigh fading, additive noise and SNR bookkeeping."""

import math
from dataclasses import dataclass

import numpy as np

from relay_wpnn.linalg import SingularChannelError, pseudoinverse, sample_complex_gaussian

MAX_CHANNEL_ATTEMPTS = 16


def snr_to_sigma2(snr_db):
    """Noise variance for a unit-power signal: SNR = 10 log10(1 / sigma^2)."""
    return 10.0 ** (-snr_db / 10.0)


def sigma2_to_snr(sigma2):
    return -10.0 * math.log10(sigma2)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float

    @property
    def sigma2(self):
        return snr_to_sigma2(self.snr_db)


@dataclass(frozen=True)
class ChannelDraw:
    g_t: np.ndarray  # N_s x M
    g_r: np.ndarray  # N_s x N_s, or M x N_s when fading lands on the receive surface
    g_t_pinv: np.ndarray | None  # M x N_s, only when the relay runs LS processing
    draw_id: int


def draw_channels(config, rng, draw_id=0):
    """One joint (G_t, G_r) Rayleigh realization; redraws if G_t cannot be pseudo-inverted."""
    rx_rows = config.m if config.rx_fading_to_surface else config.n_s
    for _ in range(MAX_CHANNEL_ATTEMPTS):
        g_t = sample_complex_gaussian((config.n_s, config.m), 1.0, rng)
        g_r = sample_complex_gaussian((rx_rows, config.n_s), 1.0, rng)
        if not config.scheme.channel_processing:
            return ChannelDraw(g_t, g_r, None, draw_id)
        try:
            pinv = pseudoinverse(g_t, config.ridge)
        except SingularChannelError:
            continue
        return ChannelDraw(g_t, g_r, pinv, draw_id)
    raise SingularChannelError(float("inf"))


def add_awgn(x, sigma2, rng):
    x = np.asarray(x, dtype=np.complex128)
    if sigma2 == 0:
        return x
    return x + sample_complex_gaussian(x.shape, sigma2, rng)
