import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relay_wpnn.config import RappParams
from relay_wpnn.nonlinear import ActivationMode, activation_apply, rapp, rapp_derivatives, rapp_vjp

DEFAULT = RappParams()


def rapp_mp(x, p=2, x_sat=1):
    with mpmath.workdps(40):
        x = mpmath.mpc(x)
        return complex(x / (1 + (abs(x) / x_sat) ** (2 * p)) ** (mpmath.mpf(1) / (2 * p)))


def finite_diff_jacobian(x, h=1e-6, params=DEFAULT):
    d_re = (rapp(x + h, params) - rapp(x - h, params)) / (2 * h)
    d_im = (rapp(x + 1j * h, params) - rapp(x - 1j * h, params)) / (2 * h)
    return d_re, d_im


complex_pts = st.builds(complex, st.floats(-50, 50), st.floats(-50, 50))


class TestRappValues:
    def test_zero(self):
        assert rapp(0j) == 0

    def test_unit_input(self):
        assert abs(rapp(1.0) - rapp_mp(1.0)) < 1e-10
        assert abs(rapp(1.0) - 2 ** -0.25) < 1e-10
        assert rapp(1.0) == pytest.approx(0.8408964, abs=1e-7)

    def test_imaginary_input(self):
        out = rapp(2j)
        assert abs(out - rapp_mp(2j)) < 1e-10
        assert abs(out - 2j / 17 ** 0.25) < 1e-12
        assert out.imag == pytest.approx(0.9849581, abs=1e-7)

    @pytest.mark.parametrize("p, x_sat", [(1.0, 1.0), (3.0, 0.5), (0.7, 2.0)])
    def test_other_parameters(self, p, x_sat):
        rng = np.random.default_rng(0)
        xs = rng.standard_normal(20) * 2 + 1j * rng.standard_normal(20) * 2
        got = rapp(xs, RappParams(p, x_sat))
        ref = [rapp_mp(x, p, x_sat) for x in xs]
        np.testing.assert_allclose(got, ref, rtol=1e-12)


class TestRappProperties:
    @given(complex_pts)
    def test_phase_preserved(self, x):
        if abs(x) > 1e-12:
            assert abs(np.angle(rapp(x) / x)) < 1e-12

    @given(st.floats(1e-3, 1e3), st.floats(-np.pi, np.pi))
    def test_amplitude_bounds(self, r, phi):
        x = r * np.exp(1j * phi)
        out = abs(rapp(x))
        assert out < DEFAULT.x_sat
        assert out < abs(x)

    @given(complex_pts)
    def test_never_exceeds_input(self, x):
        assert abs(rapp(x)) <= abs(x)

    @given(complex_pts)
    def test_odd_symmetry(self, x):
        assert rapp(-x) == -rapp(x)

    def test_monotone_amplitude(self):
        r = np.sort(np.random.default_rng(1).uniform(0, 20, 5000))
        assert np.all(np.diff(np.abs(rapp(r * np.exp(0.3j)))) > 0)


class TestRappDerivatives:
    def test_identity_at_zero(self):
        d_re, d_im = rapp_derivatives(0j)
        assert d_re == 1 and d_im == 1j

    def test_matches_finite_difference(self):
        x = 0.3 + 0.4j
        for got, ref in zip(rapp_derivatives(x), finite_diff_jacobian(x)):
            assert abs(got - ref) < 1e-7

    def test_saturation(self):
        d_re, _ = rapp_derivatives(100.0)
        # on the real axis d|out|/d|x| is the real part of d out / d Re x
        assert abs(d_re.real) < 1e-4
        assert abs(abs(rapp(100.0)) - DEFAULT.x_sat) < 1e-4

    def test_random_points(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(10_000) * 1.5 + 1j * rng.standard_normal(10_000) * 1.5
        got = rapp_derivatives(x)
        ref = finite_diff_jacobian(x)
        err = max(np.abs(got[0] - ref[0]).max(), np.abs(got[1] - ref[1]).max())
        assert err < 1e-6

    def test_vjp_consistent_with_jacobian(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        g = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        d_re, d_im = rapp_derivatives(x)
        # dL/dRe x = Re(conj(g) * d out/dRe x), likewise for Im
        expected = np.real(np.conj(g) * d_re) + 1j * np.real(np.conj(g) * d_im)
        np.testing.assert_allclose(rapp_vjp(x, g), expected, atol=1e-13)


class TestActivationApply:
    def test_identity_bit_exact(self):
        x = np.random.default_rng(0).standard_normal((3, 4)) * (1 + 1j)
        assert activation_apply(x, ActivationMode.IDENTITY) is x

    def test_zeros(self):
        out = activation_apply(np.zeros((2, 2), complex), ActivationMode.RAPP_AMPLITUDE)
        assert not out.any()

    def test_elementwise(self):
        out = activation_apply(np.array([[1, 2j]]), ActivationMode.RAPP_AMPLITUDE)
        np.testing.assert_allclose(out, [[0.8408964, 0.9849581j]], atol=1e-6)
