"""Hardware nonlinearities: the Rapp amplitude saturation and its identity counterpart.

The same amplitude-saturating map serves as the relay power-amplifier impairment and as
the programmable activation of the activation metasurfaces; each gets its own
``RappParams`` so the two can be decoupled.
"""

import enum

import numpy as np

from relay_wpnn.config import RappParams


class ActivationMode(enum.Enum):
    RAPP_AMPLITUDE = "rapp"
    IDENTITY = "identity"


def _gain(r, params):
    """Amplitude gain g(r) = (1 + (r / x_sat)^(2p))^(-1 / (2p))."""
    two_p = 2.0 * params.p
    return (1.0 + (r / params.x_sat) ** two_p) ** (-1.0 / two_p)


def _gain_slope_over_r(r, params):
    """g'(r) / r, with the r = 0 value set to 0 (the term it scales is O(r^2))."""
    two_p = 2.0 * params.p
    r = np.asarray(r, dtype=np.float64)
    u = (r / params.x_sat) ** two_p
    safe = np.where(r > 0, r, 1.0)
    return np.where(r > 0, -(u / safe**2) * (1.0 + u) ** (-1.0 / two_p - 1.0), 0.0)


def rapp(x, params=RappParams()):
    """x / (1 + (|x| / x_sat)^(2p))^(1 / (2p)), element-wise; phase is untouched."""
    x = np.asarray(x, dtype=np.complex128)
    return x * _gain(np.abs(x), params)


def rapp_derivatives(x, params=RappParams()):
    """Partial derivatives (d out / d Re x, d out / d Im x) of the Rapp map as R^2 -> R^2.

    Each partial is returned as a complex number (its real and imaginary output parts).
    """
    x = np.asarray(x, dtype=np.complex128)
    r = np.abs(x)
    g = _gain(r, params)
    h = _gain_slope_over_r(r, params)
    d_re = g + x * h * x.real
    d_im = 1j * g + x * h * x.imag
    return d_re, d_im


def rapp_vjp(x, grad, params=RappParams()):
    """Pull back ``grad`` = dL/dRe(out) + j dL/dIm(out) through the Rapp map."""
    r = np.abs(x)
    g = _gain(r, params)
    h = _gain_slope_over_r(r, params)
    return g * grad + h * np.real(np.conj(grad) * x) * x


def activation_apply(x, mode, params=RappParams()):
    if mode is ActivationMode.IDENTITY:
        return x
    return rapp(x, params)


def activation_vjp(x, grad, mode, params=RappParams()):
    if mode is ActivationMode.IDENTITY:
        return grad
    return rapp_vjp(x, grad, params)
