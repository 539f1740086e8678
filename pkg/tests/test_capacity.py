import itertools
import math

import numpy as np
import pytest

from ftnmimo.capacity import (AllocationSolution, Scheme, SnrConvention, capacity_theorem1,
                              fs_capacity, fs_rate_uniform, gain_scale, power_integral,
                              scheme_rate, scheme_spectrum, waterfill_spatial)
from ftnmimo.channel import (TappedDelayChannel, channel_spectrum, eigenmodes_flat,
                             sample_flat, sample_fs)
from ftnmimo.numerics import RandomSource
from ftnmimo.pulse import FoldedSpectrum, RrcPulse


def grid_search_capacity(tau, P, c, step):
    """Brute-force oracle: best split of P over len(tau) <= 3 channels on a lattice."""
    n = int(round(P / step))
    tau = np.asarray(tau, dtype=float)
    if tau.size == 1:
        return math.log2(1 + P * c * tau[0])
    if tau.size == 2:
        s = np.arange(n + 1) * step
        return float(np.max(np.log2(1 + s * c * tau[0]) + np.log2(1 + (P - s) * c * tau[1])))
    best = -np.inf
    s = np.arange(n + 1) * step
    for i in range(n + 1):
        a = s[i]
        b = s[: n - i + 1]
        v = np.log2(1 + a * c * tau[0]) + np.log2(1 + b * c * tau[1]) \
            + np.log2(1 + (P - a - b) * c * tau[2])
        best = max(best, float(v.max()))
    return best


class TestSnrConvention:
    def test_transmit_fixed(self):
        s = SnrConvention.from_db("tx", 20.0, 2.0)
        assert s.power(0.3) == pytest.approx(200.0)
        assert s.power(1.0) == pytest.approx(200.0)

    def test_receive_fixed(self):
        s = SnrConvention("rx", 100.0, 1.0)
        for d in (0.2, 0.5, 1.0):
            assert s.power(d) * d == pytest.approx(100.0)

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SnrConvention("tx", 0.0)
        with pytest.raises(ValueError):
            SnrConvention("sideways", 1.0)


class TestWaterfill:
    def test_single_channel(self):
        wf = waterfill_spatial([1.0], 3.0, 1.0)
        np.testing.assert_allclose(wf.sigma2, [3.0])

    def test_symmetric(self):
        np.testing.assert_allclose(waterfill_spatial([1, 1], 2.0, 1.0).sigma2, [1, 1])

    def test_frozen_two_channel(self):
        # grid search over splits at step 1e-5 gives (0.875, 0.125)
        wf = waterfill_spatial([4, 1], 1.0, 1.0)
        np.testing.assert_allclose(wf.sigma2, [0.875, 0.125], atol=1e-12)
        assert wf.nu == pytest.approx(1.125)
        s = np.arange(0, 1 + 1e-12, 1e-5)
        best = s[np.argmax(np.log2(1 + 4 * s) + np.log2(1 + (1 - s)))]
        assert best == pytest.approx(0.875, abs=1e-5)

    def test_inactive_channel(self):
        wf = waterfill_spatial([10.0, 0.01], 0.5, 1.0)
        np.testing.assert_allclose(wf.sigma2, [0.5, 0.0])

    def test_degenerate(self):
        wf = waterfill_spatial([0.0, 0.0], 1.0, 1.0)
        assert wf.degenerate
        np.testing.assert_array_equal(wf.sigma2, [0, 0])

    def test_input_order_preserved(self):
        wf = waterfill_spatial([1.0, 4.0], 1.0, 1.0)
        np.testing.assert_allclose(wf.sigma2, [0.125, 0.875])

    def test_power_sum_and_kkt(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            tau = rng.exponential(size=rng.integers(1, 6))
            P, c = rng.uniform(0.01, 20), rng.uniform(0.1, 10)
            wf = waterfill_spatial(tau, P, c)
            assert wf.sigma2.sum() == pytest.approx(P, rel=1e-9)
            assert np.all(wf.sigma2 >= 0)
            active = wf.sigma2 > 0
            np.testing.assert_allclose(wf.sigma2[active] + 1 / (c * tau[active]), wf.nu)
            assert np.all(1 / (c * tau[~active]) >= wf.nu - 1e-12)

    def test_matches_grid_search(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            tau = np.sort(rng.exponential(size=3))[::-1]
            P = rng.uniform(0.5, 5)
            wf = waterfill_spatial(tau, P, 1.0)
            active = float(np.sum(np.log2(1 + wf.sigma2 * tau)))
            assert active >= grid_search_capacity(tau, P, 1.0, P / 400) - 1e-6


class TestClosedFormCapacity:
    def test_scalar_awgn(self):
        r = capacity_theorem1(3.0, 1.0, 0.0, 1.0, 1.0, [1.0])
        assert r.bits_per_s_hz == pytest.approx(2.0, abs=1e-14)

    def test_frozen_two_channel(self):
        r = capacity_theorem1(1.0, 1.0, 0.0, 1.0, 1.0, [4.0, 1.0])
        assert r.bits_per_s_hz == pytest.approx(math.log2(4.5) + math.log2(1.125), abs=1e-12)
        assert r.bits_per_s_hz == pytest.approx(2.33985, abs=1e-5)

    def test_flat_below_threshold(self):
        a = capacity_theorem1(10.0, 0.1, 0.5, 1.0, 1.0, [4.0, 1.0])
        b = capacity_theorem1(10.0, 0.5, 0.5, 1.0, 1.0, [4.0, 1.0])
        assert a.bits_per_s_hz == pytest.approx(b.bits_per_s_hz, rel=1e-12)
        assert a.regime == b.regime == "below-threshold"

    @pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
    def test_flat_for_all_small_delta(self, beta):
        ref = capacity_theorem1(5.0, 0.05, beta, 0.01, 0.3, [2.0, 0.4]).bits_per_s_hz
        for d in np.linspace(0.05, 1 / (1 + beta) * 0.999, 12):
            c = capacity_theorem1(5.0, d, beta, 0.01, 0.3, [2.0, 0.4]).bits_per_s_hz
            assert c == pytest.approx(ref, rel=1e-12)

    @pytest.mark.parametrize("beta", [0.25, 0.5, 1.0])
    def test_continuous_at_threshold(self, beta):
        d0 = 1 / (1 + beta)
        lo = capacity_theorem1(100.0, d0 - 1e-6, beta, 0.01, 1.0, [1.5, 0.5]).bits_per_s_hz
        hi = capacity_theorem1(100.0, d0 + 1e-6, beta, 0.01, 1.0, [1.5, 0.5]).bits_per_s_hz
        assert abs(lo - hi) < 1e-3
        assert capacity_theorem1(100.0, d0, beta, 0.01, 1.0, [1.0]).regime == "above-threshold"

    def test_normalization_invariant(self):
        for d in (0.2, 0.7, 1.0):
            r = capacity_theorem1(4.0, d, 0.5, 1.0, 1.0, [1.0, 0.3])
            assert r.bits_per_s_hz == pytest.approx(r.bits_per_symbol / (d * 1.5), rel=1e-12)

    def test_monotone_in_power(self):
        caps = [capacity_theorem1(P, 0.8, 0.5, 1.0, 1.0, [1.0, 0.2]).bits_per_s_hz
                for P in np.geomspace(0.01, 100, 30)]
        assert np.all(np.diff(caps) > 0)

    def test_zero_delta_rejected(self):
        with pytest.raises(ValueError):
            capacity_theorem1(1.0, 0.0, 0.5, 1.0, 1.0, [1.0])

    def test_degenerate_channel(self):
        r = capacity_theorem1(1.0, 0.5, 0.5, 1.0, 1.0, [0.0, 0.0])
        assert r.degenerate and r.bits_per_s_hz == 0


class TestSchemes:
    T = 0.01

    def _fs(self, delta, beta=0.5):
        return FoldedSpectrum(RrcPulse(beta, self.T), delta)

    def test_uniform_at_nyquist(self):
        sol = scheme_spectrum("SsSf", 6.0, 3, 1.0, 0.0, self.T, [1, 1, 1], self._fs(1.0, 0.0))
        f = np.linspace(-0.5, 0.5, 11)
        np.testing.assert_allclose(sol.phi(0, f), 6.0 * self.T / 3)

    def test_uniform_below_threshold(self):
        sol = scheme_spectrum("SsSf", 6.0, 2, 0.5, 0.5, self.T, [1, 1], self._fs(0.5))
        f = np.linspace(-0.3, 0.3, 7)
        # flat spectrum P*delta*T/K keeps the transmit power at P
        np.testing.assert_allclose(sol.phi(1, f), 6.0 * 0.5 * self.T / 2)
        assert power_integral(sol) == pytest.approx(6.0, rel=1e-12)

    def test_symmetric_modes_collapse_waterfilling(self):
        fs = self._fs(0.8)
        a = scheme_spectrum("OsOf", 4.0, 2, 0.8, 0.5, self.T, [1, 1], fs)
        b = scheme_spectrum("SsOf", 4.0, 2, 0.8, 0.5, self.T, [1, 1], fs)
        f = np.linspace(-0.5, 0.5, 41)
        for k in range(2):
            np.testing.assert_allclose(a.phi(k, f), b.phi(k, f), rtol=1e-14)

    def test_inversion_shape(self):
        fs = self._fs(0.8)
        sol = scheme_spectrum("SsOf", 2.0, 1, 0.8, 0.5, self.T, [1.0], fs)
        f = np.linspace(-0.45, 0.45, 19)
        np.testing.assert_allclose(sol.phi(0, f) * fs(f), 2.0 * 0.8 * self.T, rtol=1e-12)

    def test_inversion_clamps_near_zeros(self):
        fs = self._fs(1 / 1.5)
        sol = scheme_spectrum("SsOf", 1.0, 1, 1 / 1.5, 0.5, self.T, [1.0], fs)
        v = sol.phi(0, np.array([0.0, 0.5]))
        assert np.all(np.isfinite(v))
        assert 0.5 in sol.clamped

    @pytest.mark.parametrize("scheme", list(Scheme))
    @pytest.mark.parametrize("delta", [0.3, 0.4, 2 / 3, 0.8, 1.0])
    def test_power_constraint(self, scheme, delta):
        tau = eigenmodes_flat(sample_flat(2, 2, RandomSource(1, 0)))
        sol = scheme_spectrum(scheme, 7.0, 2, delta, 0.5, self.T, tau, self._fs(delta))
        assert power_integral(sol) == pytest.approx(7.0, rel=1e-7)
        assert sol.sigma2.sum() == pytest.approx(7.0, rel=1e-9)

    @pytest.mark.parametrize("delta", [0.2, 0.5, 2 / 3, 0.8, 1.0])
    def test_quadrature_matches_closed_form(self, delta):
        tau = [2.3, 0.7]
        sol = scheme_spectrum("OsOf", 50.0, 2, delta, 0.5, self.T, tau, self._fs(delta))
        r = scheme_rate(sol, tau, 1.0)
        cf = capacity_theorem1(50.0, delta, 0.5, self.T, 1.0, tau)
        assert r.bits_per_s_hz == pytest.approx(cf.bits_per_s_hz, rel=1e-7)

    def test_flat_scalar(self):
        fs = self._fs(1.0, 0.0)
        sol = scheme_spectrum("SsSf", 30.0, 1, 1.0, 0.0, self.T, [1.0], fs)
        r = scheme_rate(sol, [1.0], 0.5)
        assert r.bits_per_s_hz == pytest.approx(math.log2(1 + 30.0 * self.T / 0.5), rel=1e-12)

    @pytest.mark.parametrize("delta", [0.3, 0.8])
    def test_ordering(self, delta):
        fs = self._fs(delta)
        P = 100.0
        for r in range(100):
            tau = eigenmodes_flat(sample_flat(2, 2, RandomSource(77, r)))
            rate = {s: scheme_rate(scheme_spectrum(s, P, 2, delta, 0.5, self.T, tau, fs),
                                   tau, 1.0).bits_per_s_hz for s in Scheme}
            tol = 1e-9
            assert rate[Scheme.OsSf] <= rate[Scheme.OsOf] + tol
            assert rate[Scheme.SsSf] <= rate[Scheme.SsOf] + tol
            assert rate[Scheme.SsOf] <= rate[Scheme.OsOf] + tol

    def test_of_and_sf_agree_at_nyquist_sinc(self):
        fs = self._fs(1.0, 0.0)
        tau = [1.2, 0.4]
        rates = {s: scheme_rate(scheme_spectrum(s, 10.0, 2, 1.0, 0.0, self.T, tau, fs), tau,
                                1.0).bits_per_s_hz for s in Scheme}
        assert rates[Scheme.OsOf] == pytest.approx(rates[Scheme.OsSf], rel=1e-12)
        assert rates[Scheme.SsOf] == pytest.approx(rates[Scheme.SsSf], rel=1e-12)

    def test_spectrum_mismatch_rejected(self):
        with pytest.raises(ValueError):
            scheme_spectrum("OsOf", 1.0, 1, 0.5, 0.5, self.T, [1.0], self._fs(0.8))

    def test_refinement_converged(self):
        # scheme_rate raises if doubling the panels changes the result by > 1e-7
        fs = self._fs(0.9)
        for s in Scheme:
            scheme_rate(scheme_spectrum(s, 1e4, 2, 0.9, 0.5, self.T, [3.0, 0.01], fs),
                        [3.0, 0.01], 1.0)


class TestFrequencySelective:
    T = 0.01

    def test_flat_reduction(self):
        H = sample_flat(2, 2, RandomSource(31))
        tau = eigenmodes_flat(H)
        for delta in (0.3, 0.5, 0.8, 1.0):
            fs = FoldedSpectrum(RrcPulse(0.5, self.T), delta)
            got = fs_capacity(channel_spectrum(H, delta, self.T), fs, 100.0, 1.0)
            ref = capacity_theorem1(100.0, delta, 0.5, self.T, 1.0, tau)
            assert got.bits_per_s_hz == pytest.approx(ref.bits_per_s_hz, rel=1e-3)

    def test_threshold_flatness(self):
        ch = sample_fs(2, 2, 20, 2 * self.T, RandomSource(5))
        caps = []
        for delta in (0.3, 0.5):
            fs = FoldedSpectrum(RrcPulse(0.5, self.T), delta)
            caps.append(fs_capacity(channel_spectrum(ch, delta, self.T), fs, 100.0, 1.0)
                        .bits_per_s_hz)
        assert caps[0] == pytest.approx(caps[1], rel=5e-3)

    @pytest.mark.parametrize("delta", [0.4, 0.8, 1.0])
    def test_grid_refinement(self, delta):
        ch = sample_fs(2, 2, 20, 2 * self.T, RandomSource(8))
        fs = FoldedSpectrum(RrcPulse(0.5, self.T), delta)
        spec = channel_spectrum(ch, delta, self.T)
        a = fs_capacity(spec, fs, 100.0, 1.0, 2048).bits_per_s_hz
        b = fs_capacity(spec, fs, 100.0, 1.0, 4096).bits_per_s_hz
        assert abs(a - b) < 5e-4 * b

    def test_zero_channel(self):
        ch = TappedDelayChannel([0.0, 0.001], np.zeros((2, 2, 2)))
        fs = FoldedSpectrum(RrcPulse(0.5, self.T), 0.8)
        r = fs_capacity(channel_spectrum(ch, 0.8, self.T), fs, 10.0, 1.0)
        assert r.degenerate and r.bits_per_s_hz == 0

    def test_monotone_in_power(self):
        ch = sample_fs(2, 2, 4, 2 * self.T, RandomSource(2))
        fs = FoldedSpectrum(RrcPulse(0.5, self.T), 0.7)
        spec = channel_spectrum(ch, 0.7, self.T)
        caps = [fs_capacity(spec, fs, P, 1.0, 512).bits_per_s_hz for P in (1, 10, 100, 1000)]
        assert np.all(np.diff(caps) > 0)

    def test_waterfilling_beats_uniform(self):
        ch = sample_fs(2, 2, 6, 2 * self.T, RandomSource(4))
        for delta in (0.5, 0.9):
            fs = FoldedSpectrum(RrcPulse(0.5, self.T), delta)
            spec = channel_spectrum(ch, delta, self.T)
            opt = fs_capacity(spec, fs, 50.0, 1.0).bits_per_symbol
            assert opt >= fs_rate_uniform(spec, fs, 50.0, 1.0) - 1e-9

    def test_rejects_coarse_grid(self):
        H = sample_flat(1, 1, RandomSource(0))
        fs = FoldedSpectrum(RrcPulse(0.5, self.T), 0.5)
        with pytest.raises(ValueError):
            fs_capacity(channel_spectrum(H, 0.5, self.T), fs, 1.0, 1.0, 128)
