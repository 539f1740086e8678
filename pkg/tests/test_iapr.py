import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ftnmimo.iapr import (MIN_SAMPLES, CcdfCurve, IaprConfig, gaussian_ccdf_closed,
                          gaussian_ccdf_exact, gaussian_ccdf_rx, outage_threshold,
                          periodic_variance, qpsk_ccdf, simulate_ccdf, synthesize,
                          window_tail_energy)
from ftnmimo.numerics import NumericalError, RandomSource
from ftnmimo.pulse import RrcPulse, inband_energy

T = 0.01
PULSE = RrcPulse(0.5, T)


def cfg(delta, symbol_set="gaussian", **kw):
    return IaprConfig(PULSE, delta, symbol_set, **kw)


class TestConfig:
    def test_defaults(self):
        c = cfg(0.5)
        assert c.half_span == 60
        assert c.symbol_energy == pytest.approx(0.5 * T)

    @pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=1.1), dict(P_k=0.0),
                                    dict(Q=3), dict(W_t=0.0), dict(symbol_set="16qam"),
                                    dict(N=50)])
    def test_rejects(self, kw):
        args = dict(pulse=PULSE, delta=0.5) | kw
        with pytest.raises(ValueError):
            IaprConfig(**args)

    def test_tail_energy_is_negligible(self):
        assert window_tail_energy(PULSE, 30.0) < 1e-6
        assert window_tail_energy(PULSE, 2.0) > 1e-4


class TestCcdfCurve:
    def test_rejects_descending_grid(self):
        with pytest.raises(ValueError):
            CcdfCurve([1.0, 0.5], [0.5, 0.4], "analytic", 1.0)

    def test_rejects_increasing_values(self):
        with pytest.raises(NumericalError):
            CcdfCurve([0.5, 1.0], [0.4, 0.5], "analytic", 1.0)

    def test_to_iapr(self):
        c = CcdfCurve([1.0, 2.0, 4.0], [0.5, 0.3, 0.1], "analytic", 2.0)
        i = c.to_iapr()
        assert i.normalization == "iapr"
        assert_allclose(i.gamma, [0.5, 1.0, 2.0])
        assert_allclose(i.values, c.values)
        assert i.to_iapr() is i

    def test_clips_quadrature_noise(self):
        c = CcdfCurve([1.0, 2.0, 3.0], [0.5, 1e-8, -1e-8], "analytic", 1.0)
        assert c.values[-1] == 0.0
        with pytest.raises(NumericalError):
            CcdfCurve([1.0, 2.0], [0.5, -1e-3], "analytic", 1.0)


class TestGaussianClosedForm:
    def test_unit_power_at_mean(self):
        # below threshold the folded energy is 1, so CCDF(P) = exp(-1)
        assert gaussian_ccdf_closed(1.0, 1.0, 0.5, 0.5, T) == pytest.approx(math.exp(-1))

    def test_above_threshold_uses_inband_energy(self):
        e = inband_energy(PULSE, 1 / (2 * 0.8 * T))
        assert e < 1
        assert gaussian_ccdf_closed(2.0, 1.0, 0.8, 0.5, T) == pytest.approx(math.exp(-2 / e))

    def test_receive_form(self):
        for d in (0.3, 0.8):
            E = 0.01
            assert gaussian_ccdf_rx(0.7, E, d, 0.5, T) == pytest.approx(
                gaussian_ccdf_closed(0.7, E / (d * T), d, 0.5, T), rel=1e-14)
        with pytest.raises(ValueError):
            gaussian_ccdf_rx(1.0, 0.0, 0.5, 0.5, T)

    def test_array(self):
        g = np.array([0.0, 1.0, 2.0])
        assert_allclose(gaussian_ccdf_closed(g, 1.0, 0.5, 0.5, T), np.exp(-g))


class TestGaussianExact:
    @pytest.mark.parametrize("delta", [0.1, 0.3, 0.5, 0.6])
    def test_matches_closed_below_threshold(self, delta):
        g = np.linspace(0.01, 8, 40)
        c = cfg(delta)
        assert np.max(np.abs(gaussian_ccdf_exact(g, c) - gaussian_ccdf_closed(
            g, 1.0, delta, 0.5, T))) < 1e-6

    def test_variance_is_periodic(self):
        c = cfg(0.8)
        dT = 0.8 * T
        t = np.linspace(0, dT, 7)
        # the shifted window drops a different ~1e-8 tail term
        assert_allclose(periodic_variance(c, t), periodic_variance(c, t + 3 * dT), rtol=1e-6)
        # even at Nyquist the variance ripples within a period
        v = periodic_variance(cfg(1.0), np.linspace(0, T, 9))
        assert np.ptp(v) > 1e-3

    def test_average_variance_equals_power(self):
        c = cfg(0.8, P_k=2.5)
        t = (np.arange(256) + 0.5) / 256 * 0.8 * T
        assert np.mean(periodic_variance(c, t)) == pytest.approx(2.5, rel=1e-5)

    def test_monte_carlo_above_threshold(self):
        c = cfg(0.9, N=2000)
        g = np.linspace(0.1, 6, 30)
        mc = simulate_ccdf(c, g, RandomSource(3), 40)
        assert np.max(np.abs(mc.values - gaussian_ccdf_exact(g, c))) < 0.01


class TestQpsk:
    def test_zero_threshold(self):
        assert qpsk_ccdf(0.0, cfg(0.8, "qpsk")) == 1.0

    def test_rejects_gaussian_config(self):
        with pytest.raises(ValueError):
            qpsk_ccdf(1.0, cfg(0.8))

    def test_symbol_instants_at_nyquist_sinc(self):
        c = IaprConfig(RrcPulse(0.0, T), 1.0, "qpsk", P_k=1.7, N=200)
        t, x = synthesize(c, RandomSource(2).signs(200) + 1j * RandomSource(3).signs(200))
        on = np.isclose(t / T, np.round(t / T), atol=1e-9)
        assert on.sum() > 50
        # raw +-1+-j symbols and p(0)^2 = 1/T give |x|^2 = 2/T
        assert_allclose(np.abs(x[on]) ** 2, 2 / T, rtol=1e-10)

    def test_simulated_symbol_instants(self):
        c = IaprConfig(RrcPulse(0.0, T), 1.0, "qpsk", P_k=1.7, N=200, Q=4)
        _, x = synthesize(c, math.sqrt(c.symbol_energy / 2) * (1 + 1j) * np.ones(200))
        assert_allclose(np.abs(x[::4]) ** 2, 1.7, rtol=1e-10)

    @pytest.mark.parametrize("delta", [1.0, 0.5])
    def test_against_monte_carlo(self, delta):
        c = cfg(delta, "qpsk", N=2000)
        g = np.linspace(0.2, 2.4, 12)
        ana = qpsk_ccdf(g, c, tail_tol=1e-7)
        mc = simulate_ccdf(c, g, RandomSource(17), 25)
        assert np.max(np.abs(ana - mc.values)) < 0.02

    def test_monotone(self):
        v = qpsk_ccdf(np.linspace(0.1, 3, 15), cfg(0.8, "qpsk"), tail_tol=1e-7)
        assert np.all(np.diff(v) <= 1e-6)


class TestSimulation:
    def test_mean_power(self):
        for delta in (0.1, 0.5, 1.0):
            c = cfg(delta, N=4000)
            mc = simulate_ccdf(c, [1.0], RandomSource(9), 10)
            assert 0.97 <= mc.meta["mean_power"] <= 1.03

    def test_deterministic(self):
        c = cfg(0.8, "qpsk", N=500)
        a, sa = simulate_ccdf(c, [0.5, 1.0], RandomSource(4), 10, return_samples=True)
        b, sb = simulate_ccdf(c, [0.5, 1.0], RandomSource(4), 10, return_samples=True)
        np.testing.assert_array_equal(sa, sb)
        np.testing.assert_array_equal(a.values, b.values)

    def test_too_few_samples(self):
        c = cfg(1.0, N=100, Q=4)
        with pytest.raises(ValueError, match=str(MIN_SAMPLES)):
            simulate_ccdf(c, [1.0], RandomSource(0), 1)

    def test_interior_only(self):
        c = cfg(1.0, N=300, Q=4)
        t, x = synthesize(c, np.ones(300))
        assert t[0] == pytest.approx(30 * T)
        assert t[-1] == pytest.approx((299 - 30) * T)
        assert x.size == (299 - 60) * 4 + 1


class TestOutage:
    def test_exponential(self):
        p = outage_threshold(lambda g: math.exp(-g), 0.01)
        assert p == pytest.approx(math.log(100), abs=1e-10)
        assert 10 * math.log10(p) == pytest.approx(6.6324, abs=1e-4)

    def test_sampled_curve_interpolates(self):
        c = CcdfCurve([0.0, 1.0, 2.0], [1.0, 0.5, 0.0], "analytic", 1.0)
        assert outage_threshold(c, 0.25) == pytest.approx(1.5)
        assert outage_threshold(c, 1.0) == 0.0

    def test_unreachable(self):
        c = CcdfCurve([0.0, 1.0], [1.0, 0.5], "analytic", 1.0)
        with pytest.raises(ValueError):
            outage_threshold(c, 0.1)
        with pytest.raises(ValueError):
            outage_threshold(c, 0.0)
