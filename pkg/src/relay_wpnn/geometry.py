"""Array layouts and Rayleigh-Sommerfeld diffraction matrices between stacked layers."""

import math
from dataclasses import dataclass

import numpy as np

AXIS = np.array([0.0, 0.0, 1.0])


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayLayout:
    positions: np.ndarray  # (n, 3) meters
    normal: np.ndarray
    kind: str  # "UPA" or "ULA"

    def __len__(self):
        return len(self.positions)

    @property
    def offset(self):
        """Axial position of the layer plane."""
        return float(self.positions[0] @ self.normal)


def ula(n, spacing, z):
    x = (np.arange(n) - (n - 1) / 2.0) * spacing
    pos = np.column_stack([x, np.zeros(n), np.full(n, float(z))])
    return ArrayLayout(pos, AXIS.copy(), "ULA")


def upa(m, spacing, z):
    """``m`` elements on a ceil(sqrt(m))-column grid, row-major, centred on the axis."""
    cols = math.ceil(math.sqrt(m))
    rows = math.ceil(m / cols)
    idx = np.arange(m)
    x = (idx % cols - (cols - 1) / 2.0) * spacing
    y = (idx // cols - (rows - 1) / 2.0) * spacing
    pos = np.column_stack([x, y, np.full(m, float(z))])
    return ArrayLayout(pos, AXIS.copy(), "UPA")


def build_layouts(config, geom=None):
    """Transmitter and receiver stacks, ordered along the propagation direction.

    tx: ULA(N_t), then 2L metasurfaces (passive, activation, passive, ...).
    rx: ULA(N_s) standing for the relay array, 2L metasurfaces, then ULA(N_r).
    Each side uses its own axial origin at its first array.
    """
    geom = geom or config.geometry
    lam_half = geom.element_spacing
    surfaces = [geom.antenna_to_first_layer + i * geom.inter_layer for i in range(2 * config.layers)]
    tx = [ula(config.n_t, lam_half, 0.0)] + [upa(config.m, lam_half, z) for z in surfaces]
    rx = [ula(config.n_s, lam_half, 0.0)] + [upa(config.m, lam_half, z) for z in surfaces]
    rx.append(ula(config.n_r, lam_half, surfaces[-1] + geom.antenna_to_first_layer))
    return tx, rx


def distances(src, dst):
    """(|dst|, |src|) Euclidean distances and source-normal direction cosines."""
    delta = dst.positions[:, None, :] - src.positions[None, :, :]
    d = np.sqrt(np.sum(delta**2, axis=-1))
    if np.any(d == 0):
        raise GeometryError("coincident source and destination elements")
    cos_phi = np.abs(delta @ src.normal) / d
    return d, cos_phi


def diffraction_matrix(src, dst, geom):
    """Transmission coefficients from every element of ``src`` to every element of ``dst``.

    ``W[m, n] = A cos(phi) / d * (1 / (2 pi d) - j / lam) * exp(j 2 pi d / lam)``
    """
    d, cos_phi = distances(src, dst)
    lam = geom.wavelength
    area = geom.element_area
    return area * cos_phi / d * (1.0 / (2 * np.pi * d) - 1j / lam) * np.exp(2j * np.pi * d / lam)


def chain_matrices(layouts, geom):
    return [diffraction_matrix(a, b, geom) for a, b in zip(layouts[:-1], layouts[1:])]
