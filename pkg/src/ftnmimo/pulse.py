"""Root-raised-cosine pulses and the folded spectrum of an FTN symbol grid.

``p(t)`` is the unit-energy RRC pulse, ``g(t) = p(t) * p(-t)`` the
raised-cosine autocorrelation and ``G(f)`` its spectrum. Sampling ``g``
every ``delta*T`` seconds gives a Toeplitz Gram matrix whose symbol is the
folded spectrum ``G_d(f_n)`` on the normalised period ``[-1/2, 1/2]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RrcPulse",
    "FoldedSpectrum",
    "rrc_time",
    "rc_autocorr",
    "rc_spectrum",
    "inband_energy",
    "folded_spectrum",
    "support",
]

_SINGULAR_TOL = 1e-9


@dataclass(frozen=True)
class RrcPulse:
    """RRC pulse with roll-off ``beta`` and Nyquist period ``T`` seconds."""

    beta: float = 0.5
    T: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"roll-off beta={self.beta} outside [0, 1]")
        if not self.T > 0:
            raise ValueError(f"symbol period T={self.T} must be positive")

    @property
    def bandwidth(self) -> float:
        """One-sided bandwidth (1+beta)/(2T) in Hz."""
        return (1.0 + self.beta) / (2.0 * self.T)

    @property
    def threshold(self) -> float:
        """Acceleration factor 1/(1+beta) below which the folded spectrum has gaps."""
        return 1.0 / (1.0 + self.beta)

    def p(self, t):
        return rrc_time(self, t)

    def g(self, t):
        return rc_autocorr(self, t)

    def G(self, f):
        return rc_spectrum(self, f)


def _out(x, arr):
    return float(arr) if np.ndim(x) == 0 else arr


def rrc_time(pulse: RrcPulse, t):
    """Unit-energy RRC pulse p(t), units 1/sqrt(s)."""
    b, T = pulse.beta, pulse.T
    x = np.asarray(t, dtype=float) / T
    out = np.empty_like(x)
    at_zero = np.abs(x) < _SINGULAR_TOL
    if b > 0:
        at_edge = np.abs(np.abs(x) - 1.0 / (4.0 * b)) < _SINGULAR_TOL
    else:
        at_edge = np.zeros_like(at_zero)
    reg = ~(at_zero | at_edge)
    xr = x[reg]
    num = np.sin(math.pi * xr * (1 - b)) + 4 * b * xr * np.cos(math.pi * xr * (1 + b))
    out[reg] = num / (math.pi * xr * (1 - (4 * b * xr) ** 2))
    out[at_zero] = 1 - b + 4 * b / math.pi
    if b > 0:
        q = math.pi / (4 * b)
        out[at_edge] = b / math.sqrt(2) * ((1 + 2 / math.pi) * math.sin(q)
                                           + (1 - 2 / math.pi) * math.cos(q))
    return _out(t, out / math.sqrt(T))


def rc_autocorr(pulse: RrcPulse, t):
    """Raised-cosine autocorrelation g(t) with g(0) = 1."""
    b, T = pulse.beta, pulse.T
    x = np.asarray(t, dtype=float) / T
    if b == 0:
        return _out(t, np.sinc(x))
    out = np.empty_like(x)
    at_pole = np.abs(np.abs(x) - 1.0 / (2.0 * b)) < _SINGULAR_TOL
    reg = ~at_pole
    xr = x[reg]
    out[reg] = np.sinc(xr) * np.cos(math.pi * b * xr) / (1 - (2 * b * xr) ** 2)
    out[at_pole] = math.pi / 4 * np.sinc(1.0 / (2.0 * b))
    return _out(t, out)


def rc_spectrum(pulse: RrcPulse, f):
    """Raised-cosine spectrum G(f) in seconds; integrates to one."""
    b, T = pulse.beta, pulse.T
    af = np.abs(np.asarray(f, dtype=float))
    f1 = (1 - b) / (2 * T)
    f2 = (1 + b) / (2 * T)
    if b == 0:
        # brick wall; the edge takes the midpoint value so folded copies sum to T
        return _out(f, np.where(af < f1, T, np.where(af == f1, 0.5 * T, 0.0)))
    out = np.where(af <= f1, T, 0.0)
    if b > 0:
        roll = (af > f1) & (af <= f2)
        out = np.where(roll, 0.5 * T * (1 + np.cos(math.pi * T / b * (af - f1))), out)
    return _out(f, out)


def inband_energy(pulse: RrcPulse, half_width: float) -> float:
    """Closed form of the integral of G(f) over [-half_width, half_width]."""
    b, T = pulse.beta, pulse.T
    B = abs(half_width)
    f1 = (1 - b) / (2 * T)
    f2 = (1 + b) / (2 * T)
    if B <= f1:
        return 2 * T * B
    total = 2 * T * f1
    if b > 0:
        x = min(B, f2) - f1
        total += T * (x + b / (math.pi * T) * math.sin(math.pi * T * x / b))
    return min(total, 1.0)


@dataclass(frozen=True)
class FoldedSpectrum:
    """Folded spectrum of ``pulse`` for acceleration factor ``delta``."""

    pulse: RrcPulse
    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError(f"acceleration factor delta={self.delta} outside (0, 1]")

    @property
    def below_threshold(self) -> bool:
        return self.delta * (1 + self.pulse.beta) < 1.0

    @property
    def support(self) -> list[tuple[float, float]]:
        return support(self)[0]

    @property
    def measure(self) -> float:
        return support(self)[1]

    @property
    def edge(self) -> float:
        """Upper end of the (symmetric) support."""
        return self.support[0][1]

    def __call__(self, f_n):
        return folded_spectrum(self, f_n)

    def breakpoints(self) -> np.ndarray:
        """Points of [0, edge] where G_d loses smoothness, including the ends."""
        d, b = self.delta, self.pulse.beta
        pts = {0.0, self.edge}
        for k in (-1, 0, 1):
            for c in (d * (1 - b) / 2, d * (1 + b) / 2):
                for v in (k + c, k - c):
                    if 0.0 < v < self.edge:
                        pts.add(v)
        return np.array(sorted(pts))


def folded_spectrum(fs: FoldedSpectrum, f_n):
    """G_d(f_n) = (1/(delta T)) sum_m G((f_n - m)/(delta T)) on [-1/2, 1/2]."""
    x = np.asarray(f_n, dtype=float)
    if np.any(np.abs(x) > 0.5 + 1e-12):
        bad = x[np.abs(x) > 0.5 + 1e-12].ravel()[0]
        raise ValueError(f"normalised frequency {bad} outside [-1/2, 1/2]")
    dT = fs.delta * fs.pulse.T
    M = math.ceil(fs.delta * (1 + fs.pulse.beta) / 2) + 1
    out = np.zeros_like(x)
    for m in range(-M, M + 1):
        out = out + rc_spectrum(fs.pulse, (x - m) / dT)
    return _out(f_n, out / dT)


def support(fs: FoldedSpectrum) -> tuple[list[tuple[float, float]], float]:
    """Support intervals of G_d inside [-1/2, 1/2] and their total measure."""
    width = fs.delta * (1 + fs.pulse.beta)
    if width < 1.0:
        return [(-width / 2, width / 2)], width
    return [(-0.5, 0.5)], 1.0
