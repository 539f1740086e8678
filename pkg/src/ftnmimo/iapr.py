"""Instantaneous-power statistics of FTN waveforms.

The waveform on one antenna is ``x(t) = sum_m a[m] p(t - m delta T)``. It is
cyclostationary with period ``delta T``, so every CCDF here is averaged over
one period: ``C(gamma) = (1/(delta T)) int_0^{delta T} Pr[|x(t)|^2 >= gamma] dt``.

Analytic routes
---------------
* Gaussian symbols, closed form through the in-band energy of ``G``.
* Gaussian symbols, exact time average of the periodic variance.
* QPSK symbols, a characteristic-function integral against ``J1``.

The Monte Carlo route synthesizes waveforms and pools samples over a
uniform time grid, which performs the same time average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .numerics import (NumericalError, Quadrature, RandomSource, bessel_j1, bisect,
                       integrate, oscillatory_panel_sums)
from .pulse import RrcPulse, inband_energy, rrc_time

__all__ = [
    "IaprConfig",
    "CcdfCurve",
    "window_tail_energy",
    "gaussian_ccdf_closed",
    "gaussian_ccdf_rx",
    "gaussian_ccdf_exact",
    "qpsk_ccdf",
    "synthesize",
    "simulate_ccdf",
    "outage_threshold",
    "MIN_SAMPLES",
]

MIN_SAMPLES = 10_000
SYMBOL_STREAM_OFFSET = 10**6
CCDF_TOL = 1e-6


@dataclass(frozen=True)
class IaprConfig:
    """Waveform setup for one antenna.

    Parameters
    ----------
    pulse : RrcPulse
    delta : float
        Acceleration factor in (0, 1].
    symbol_set : {"gaussian", "qpsk"}
    P_k : float
        Average transmit power of the antenna; symbols carry energy ``P_k delta T``.
    N : int
        Symbols per realization.
    Q : int
        Samples per symbol interval ``delta T``.
    W_t : float
        Half-width of the pulse truncation window in units of ``T``.
    """

    pulse: RrcPulse
    delta: float
    symbol_set: str = "gaussian"
    P_k: float = 1.0
    N: int = 1000
    Q: int = 8
    W_t: float = 30.0

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError(f"acceleration factor delta={self.delta} outside (0, 1]")
        if self.symbol_set not in ("gaussian", "qpsk"):
            raise ValueError(f"symbol set {self.symbol_set!r} not in {{gaussian, qpsk}}")
        if not self.P_k > 0:
            raise ValueError(f"per-antenna power P_k={self.P_k} must be positive")
        if self.Q < 4:
            raise ValueError(f"oversampling Q={self.Q} must be at least 4")
        if not self.W_t > 0:
            raise ValueError(f"truncation window W_t={self.W_t} must be positive")
        need = 2 * self.half_span + 2
        if self.N < need:
            raise ValueError(
                f"N={self.N} symbols cannot fill a +-{self.W_t}T window at delta={self.delta}; "
                f"need N >= {need}")

    @property
    def half_span(self) -> int:
        """Symbols on each side of ``t`` inside the truncation window."""
        return math.ceil(self.W_t / self.delta - 1e-12)

    @property
    def symbol_energy(self) -> float:
        return self.P_k * self.delta * self.pulse.T

    def pulse_samples(self, t: float) -> np.ndarray:
        """``p(t - m delta T)`` for the window around ``t``; negligible terms dropped."""
        dT = self.delta * self.pulse.T
        m = np.arange(-self.half_span - 1, self.half_span + 2)
        tau = t - m * dT
        pm = rrc_time(self.pulse, tau[np.abs(tau) <= self.W_t * self.pulse.T])
        return pm[np.abs(pm) > 1e-9 * np.abs(pm).max()]


@dataclass(frozen=True)
class CcdfCurve:
    """CCDF samples on an ascending threshold grid.

    ``normalization`` is ``"instant-power"`` when ``gamma`` is in watts and
    ``"iapr"`` when it is divided by ``P_k``.
    """

    gamma: np.ndarray
    values: np.ndarray
    kind: str
    P_k: float
    normalization: str = "instant-power"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("gamma and values must be 1-D arrays of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("gamma grid must be strictly ascending")
        if np.any(g < 0):
            raise ValueError("gamma grid must be non-negative")
        # quadrature noise in analytic curves is ~1e-8 where the CCDF is exactly 0
        if np.any(np.diff(v) > CCDF_TOL):
            raise NumericalError("CCDF values increase along the gamma grid")
        if np.any((v < -CCDF_TOL) | (v > 1 + CCDF_TOL)):
            raise NumericalError("CCDF values outside [0, 1]")
        if self.kind not in ("analytic", "monte-carlo"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.normalization not in ("instant-power", "iapr"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    def to_iapr(self) -> "CcdfCurve":
        if self.normalization == "iapr":
            return self
        return CcdfCurve(self.gamma / self.P_k, self.values, self.kind, self.P_k, "iapr",
                         dict(self.meta))


def window_tail_energy(pulse: RrcPulse, W_t: float) -> float:
    """Energy of ``p`` outside ``[-W_t T, W_t T]``."""
    T = pulse.T
    inner = integrate(lambda t: rrc_time(pulse, t) ** 2, 0.0, W_t * T,
                      Quadrature(panels=int(8 * W_t) + 8, points=16))
    return max(0.0, 1.0 - 2.0 * inner)


def _folded_energy(delta: float, beta: float, T: float) -> float:
    return inband_energy(RrcPulse(beta, T), 1.0 / (2.0 * delta * T))


def gaussian_ccdf_closed(gamma, P_k: float, delta: float, beta: float, T: float):
    """Transmit-power-fixed Gaussian CCDF, closed form."""
    g = np.asarray(gamma, dtype=float)
    out = np.exp(-g / (P_k * _folded_energy(delta, beta, T)))
    return float(out) if out.ndim == 0 else out


def gaussian_ccdf_rx(gamma, E: float, delta: float, beta: float, T: float):
    """Gaussian CCDF with fixed symbol energy ``E``, so ``P_k = E / (delta T)``."""
    if not E > 0:
        raise ValueError("symbol energy E must be positive")
    g = np.asarray(gamma, dtype=float)
    out = np.exp(-g / (E / (delta * T) * _folded_energy(delta, beta, T)))
    return float(out) if out.ndim == 0 else out


def _t_nodes(cfg: IaprConfig, points: int, half: bool) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on one period, or on half of it when symmetry is used.

    Weights are normalised to sum to one.
    """
    dT = cfg.delta * cfg.pulse.T
    t, w = Quadrature(1, points).nodes(0.0, dT / 2 if half else dT)
    return t, w / w.sum()


def periodic_variance(cfg: IaprConfig, t) -> np.ndarray:
    """``E|x(t)|^2 = P_k delta T sum_m p(t - m delta T)^2``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([cfg.symbol_energy * np.sum(cfg.pulse_samples(ti) ** 2) for ti in t])


def gaussian_ccdf_exact(gamma, cfg: IaprConfig, t_points: int = 16):
    """Gaussian CCDF from the exact time average of ``exp(-gamma / E|x(t)|^2)``."""
    g = np.asarray(gamma, dtype=float)
    t, w = _t_nodes(cfg, t_points, half=False)
    v = periodic_variance(cfg, t)
    out = np.exp(-np.multiply.outer(g, 1.0 / v)) @ w
    return float(out) if out.ndim == 0 else out


def _angular_mean(zeta: np.ndarray, amp: np.ndarray) -> np.ndarray:
    """Mean over phi in [0, 2 pi) of prod_m cos(z a_m cos phi) cos(z a_m sin phi).

    The integrand has period pi/2 in phi, so a midpoint rule on a quarter
    period converges spectrally. The node count follows the largest phase
    excursion ``z * sum|a_m|`` of the block.
    """
    out = np.empty(zeta.size)
    order = np.argsort(zeta)
    z_sorted = zeta[order]
    s = np.abs(amp).sum()
    for lo in range(0, zeta.size, 128):
        z = z_sorted[lo:lo + 128]
        n_phi = int(math.ceil(1.2 * z.max() * s / 4)) + 12
        phi = (np.arange(n_phi) + 0.5) * (0.5 * math.pi / n_phi)
        A = z[:, None] * amp[None, :]
        acc = np.zeros(z.size)
        for c, sn in zip(np.cos(phi), np.sin(phi)):
            acc += np.prod(np.cos(A * c) * np.cos(A * sn), axis=1)
        out[order[lo:lo + 128]] = acc / n_phi
    return out


def qpsk_ccdf(gamma, cfg: IaprConfig, *, t_points: int = 24, tail_tol: float = 1e-10,
              points: int = 16, max_panels: int = 20000):
    """Time-averaged CCDF of ``|x(t)|^2`` for QPSK symbols.

    Evaluates ``1 - sqrt(gamma) int_0^inf J1(sqrt(gamma) z) D(z) dz`` where
    ``D`` is the characteristic-function term averaged over phase and over
    one symbol period. ``D(z; t)`` is symmetric about ``delta T / 2``, so
    ``t_points`` Gauss-Legendre nodes cover half a period. All thresholds
    share one set of ``z`` nodes (panel width ``pi / sqrt(max gamma)``).
    """
    if cfg.symbol_set != "qpsk":
        raise ValueError("qpsk_ccdf needs a qpsk configuration")
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    out = np.ones_like(g)
    pos = g > 0
    if not np.any(pos):
        return float(out[0]) if np.ndim(gamma) == 0 else out
    gp = g[pos]
    root = np.sqrt(gp)
    a = math.sqrt(cfg.symbol_energy / 2.0)
    t, w = _t_nodes(cfg, t_points, half=True)
    amps = [a * cfg.pulse_samples(ti) for ti in t]

    def rows(z):
        d = sum(wi * _angular_mean(z, am) for wi, am in zip(w, amps))
        return root[:, None] * bessel_j1(np.outer(root, z)) * d[None, :]

    spacing = math.pi / root
    vals = oscillatory_panel_sums(rows, float(spacing.min()), spacing, tail_tol,
                                  points=points, max_panels=max_panels, block=32)
    out[pos] = 1.0 - vals
    return float(out[0]) if np.ndim(gamma) == 0 else out


def _symbols(cfg: IaprConfig, src: RandomSource) -> np.ndarray:
    E = cfg.symbol_energy
    if cfg.symbol_set == "gaussian":
        return src.complex_normal(cfg.N, E)
    re = src.signs(cfg.N)
    im = src.signs(cfg.N)
    return math.sqrt(E / 2.0) * (re + 1j * im)


def synthesize(cfg: IaprConfig, symbols) -> tuple[np.ndarray, np.ndarray]:
    """Waveform on the interior where every sample sees its full symbol window.

    Returns ``(t, x)`` with ``t`` in seconds from the first symbol; samples
    with ``t`` an integer multiple of ``delta T`` fall on symbol instants.
    """
    a = np.asarray(symbols, dtype=complex)
    dT = cfg.delta * cfg.pulse.T
    Q = cfg.Q
    span = cfg.half_span * Q
    taps = rrc_time(cfg.pulse, np.arange(-span, span + 1) * dT / Q)
    taps[np.abs(np.arange(-span, span + 1)) * dT / Q > cfg.W_t * cfg.pulse.T] = 0.0
    up = np.zeros(a.size * Q, dtype=complex)
    up[::Q] = a
    x = fftconvolve(up, taps)
    j = np.arange(x.size) - span          # sample index relative to symbol 0
    first, last = span, (a.size - 1) * Q - span
    keep = (j >= first) & (j <= last)
    return j[keep] * dT / Q, x[keep]


def _empirical_ccdf(samples: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    s = np.sort(samples)
    return (s.size - np.searchsorted(s, gamma, side="left")) / s.size


def simulate_ccdf(cfg: IaprConfig, gamma, src: RandomSource, R: int,
                  return_samples: bool = False):
    """Monte Carlo CCDF of ``|x(t)|^2`` pooled over ``R`` realizations.

    Realization ``r`` draws its symbols from stream ``10**6 + r`` of the
    master seed carried by ``src``.
    """
    if R < 1:
        raise ValueError("need at least one realization")
    gamma = np.asarray(gamma, dtype=float)
    pooled = []
    for r in range(R):
        s = src.spawn(SYMBOL_STREAM_OFFSET + r)
        _, x = synthesize(cfg, _symbols(cfg, s))
        pooled.append(np.abs(x) ** 2)
    samples = np.concatenate(pooled) if pooled else np.zeros(0)
    if samples.size < MIN_SAMPLES:
        raise ValueError(f"only {samples.size} retained samples; at least {MIN_SAMPLES} needed")
    curve = CcdfCurve(gamma, _empirical_ccdf(samples, gamma), "monte-carlo", cfg.P_k,
                      meta={"samples": samples.size,
                            "mean_power": float(np.add.reduce(samples) / samples.size)})
    return (curve, samples) if return_samples else curve


def outage_threshold(curve: CcdfCurve | Callable[[float], float], p_out: float,
                     *, gamma_hi: float | None = None, tol: float = 1e-12) -> float:
    """Smallest ``gamma`` with ``CCDF(gamma) <= p_out``.

    Sampled curves are interpolated linearly between the bracketing grid
    points; callables are solved by bisection on ``[0, gamma_hi]``, where the
    bracket is doubled until it contains the crossing.
    """
    if not 0 < p_out <= 1:
        raise ValueError(f"outage probability {p_out} outside (0, 1]")
    if p_out == 1:
        return 0.0
    if isinstance(curve, CcdfCurve):
        g, v = curve.gamma, curve.values
        below = np.flatnonzero(v <= p_out)
        if below.size == 0:
            raise ValueError(f"curve never reaches p_out={p_out}; minimum is {v.min():.6g}")
        i = int(below[0])
        if i == 0:
            return float(g[0])
        g0, g1, v0, v1 = g[i - 1], g[i], v[i - 1], v[i]
        return float(g0 + (v0 - p_out) * (g1 - g0) / (v0 - v1))
    hi = 1.0 if gamma_hi is None else float(gamma_hi)
    for _ in range(200):
        if curve(hi) <= p_out:
            break
        hi *= 2.0
    else:
        raise ValueError(f"CCDF never reaches p_out={p_out}; value {curve(hi):.6g} at {hi:.6g}")
    return bisect(lambda x: curve(x) - p_out, 0.0, hi, tol=tol)
