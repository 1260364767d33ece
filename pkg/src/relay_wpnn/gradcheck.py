"""Central finite-difference check of the analytic gradients on a frozen stochastic graph."""

from dataclasses import dataclass

import numpy as np

from relay_wpnn import model as mdl
from relay_wpnn.config import ExperimentConfig, Scheme
from relay_wpnn.linalg import SeededRng
from relay_wpnn.training import loss_and_grad, softmax_cross_entropy

RTOL = 1e-4
# gradients below this size are compared against it instead; the five-point stencil
# has roundoff ~eps * loss / h ~ 1e-13 and truncation ~h^4, both far under RTOL * ZERO_FLOOR
ZERO_FLOOR = 1e-7
STEP = 1e-3


def tiny_config(scheme=Scheme.RELAY_NONLINEAR, **overrides):
    """N_t = N_s = N_r = 2, M = 4, L = 1, 3x4 images so that K = 3."""
    base = dict(scheme=scheme, n_t=2, n_s=2, n_r=2, m=4, layers=1, height=3, width=4, snr_db=10.0)
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass
class GradcheckResult:
    scheme: Scheme
    checked: int
    max_rel_error: float
    worst: str
    failures: list

    @property
    def ok(self):
        return not self.failures


def _rel_error(a, n):
    denom = max(abs(a), abs(n))
    if denom < ZERO_FLOOR:
        return abs(a - n) / ZERO_FLOOR
    return abs(a - n) / denom


def check_gradients(config, seed=0, batch=3, rtol=RTOL, randomize=True):
    """Compare every analytic partial derivative with a five-point central difference.

    The channel and noise realization is drawn once and held fixed. With ``randomize``
    the zero-initialized biases get random values so that their paths are exercised.
    """
    root = SeededRng(seed)
    data_rng = root.stream("gradcheck-data")
    params = mdl.init_params(config, root.stream("init"))
    if randomize:
        for name in ("b_t", "b_r", "b_s"):
            v = getattr(params, name)
            v[...] = 0.3 * (data_rng.standard_normal(v.shape) + 1j * data_rng.standard_normal(v.shape))
        params.fc_bias[...] = 0.1 * data_rng.standard_normal(params.fc_bias.shape)
        params.z *= 3.0  # push the relay amplifier into its nonlinear range
    images = data_rng.uniform(0.0, 1.0, size=(batch, config.height, config.width))
    labels = data_rng.integers(0, config.num_classes, size=batch)
    fixed = mdl.build_propagation(config)
    real = mdl.draw_realization(config, batch, root.stream("channel"), root.stream("noise"))

    def loss_at(p):
        logits, _ = mdl.forward(images, p, fixed, config, real)
        return softmax_cross_entropy(logits, labels)[0]

    _, grads = loss_and_grad(images, labels, params, fixed, config, real)
    failures = []
    worst, worst_name, checked = 0.0, "", 0
    for name, value in params.items():
        is_complex = np.iscomplexobj(value)
        g = getattr(grads, name)
        for idx in np.ndindex(value.shape):
            for part in ((1.0, 1j) if is_complex else (1.0,)):
                x0 = value[idx]
                mag = abs(x0.real if part == 1.0 else x0.imag)
                h = STEP * max(1.0, mag)
                f = {}
                for k in (-2, -1, 1, 2):
                    value[idx] = x0 + k * h * part
                    f[k] = loss_at(params)
                value[idx] = x0
                numeric = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
                analytic = g[idx].real if part == 1.0 else g[idx].imag
                err = _rel_error(analytic, numeric)
                checked += 1
                label = f"{name}{list(idx)}{'.im' if part == 1j else ''}"
                if err > worst:
                    worst, worst_name = err, label
                if err >= rtol:
                    failures.append((label, analytic, numeric, err))
    return GradcheckResult(config.scheme, checked, worst, worst_name, failures)


def check_all_schemes(seed=0, **overrides):
    return [check_gradients(tiny_config(s, **overrides), seed=seed) for s in Scheme]
