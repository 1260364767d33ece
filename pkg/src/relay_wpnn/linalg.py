"""Complex matrix substrate: products, adjoints, ridge pseudoinverse and seeded sampling.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Leading batch axes are
allowed wherever numpy's ``matmul`` broadcasting allows them.
"""

import zlib

import numpy as np

RNG_ALGORITHM = "numpy-PCG64-SeedSequence"
DEFAULT_RIDGE = 1e-12
MAX_CONDITION = 1e12


class ConfigurationError(ValueError):
    """Inconsistent shapes or configuration values."""


class SingularChannelError(np.linalg.LinAlgError):
    def __init__(self, condition):
        super().__init__(f"pseudoinverse inner system is singular (1-norm condition estimate {condition:.3e})")
        self.condition = condition


def as_complex(a):
    return np.asarray(a, dtype=np.complex128)


def _check_finite(a):
    if not np.all(np.isfinite(a)):
        raise FloatingPointError("non-finite entry in complex matrix")
    return a


def matmul(a, b):
    a, b = as_complex(a), as_complex(b)
    if a.shape[-1] != b.shape[-2]:
        raise ConfigurationError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return _check_finite(a @ b)


def adjoint(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(as_complex(a), -1, -2))


def pseudoinverse(g, ridge=DEFAULT_RIDGE):
    """Moore-Penrose pseudoinverse through regularized normal equations.

    Wide inputs use ``G^H (G G^H + ridge I)^-1``, tall ones ``(G^H G + ridge I)^-1 G^H``.
    Raises :class:`SingularChannelError` when the inner system is too ill-conditioned
    for the ridge to rescue.
    """
    g = as_complex(g)
    if g.ndim != 2:
        raise ConfigurationError(f"pseudoinverse expects a matrix, got shape {g.shape}")
    if ridge < 0:
        raise ConfigurationError(f"ridge must be nonnegative, got {ridge}")
    if not np.any(g):
        raise ConfigurationError("pseudoinverse of an all-zero matrix")
    rows, cols = g.shape
    gh = adjoint(g)
    if rows <= cols:
        inner = g @ gh + ridge * np.eye(rows)
    else:
        inner = gh @ g + ridge * np.eye(cols)
    with np.errstate(all="ignore"):
        condition = np.linalg.cond(inner, 1)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularChannelError(condition)
    if rows <= cols:
        # inner is Hermitian, so G^H inner^-1 = (inner^-1 G)^H
        return _check_finite(adjoint(np.linalg.solve(inner, g)))
    return _check_finite(np.linalg.solve(inner, gh))


class SeededRng:
    """Root of a family of independent, named random streams.

    Each stream is a fresh ``numpy.random.Generator`` keyed by ``(seed, name)``, so draws
    from the ``"noise"`` stream can never shift the ``"channel"`` stream.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed):
        self.seed = int(seed)

    def stream(self, name):
        key = zlib.crc32(name.encode("utf-8"))
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=(key,))))

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, algorithm={self.algorithm!r})"


def sample_complex_gaussian(shape, variance, rng):
    """I.i.d. circularly-symmetric CN(0, variance) draws; Re and Im each get variance/2.

    ``shape`` may be ``(rows, cols)`` or carry leading batch axes.
    """
    if variance < 0:
        raise ConfigurationError(f"variance must be nonnegative, got {variance}")
    shape = tuple(int(s) for s in shape)
    if variance == 0:
        return np.zeros(shape, dtype=np.complex128)
    pair = rng.standard_normal(shape + (2,))
    out = pair[..., 0] + 1j * pair[..., 1]
    return out * np.sqrt(variance / 2.0)
