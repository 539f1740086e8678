"""Asymptotic MIMO FTN capacity and the four power-allocation schemes.

Schemes are tagged by how power is spread across eigenchannels (spatial, S)
and across frequency (F): ``O`` is water-filled and ``S`` is uniform.

========  =======================  ==================================
scheme    spatial powers sigma_k^2  data spectrum phi_k(f_n)
========  =======================  ==================================
OsOf      water-filled             inverts G_d on the support
SsOf      P / K                    inverts G_d on the support
OsSf      water-filled             flat, sigma_k^2 * delta * T
SsSf      P / K                    flat, P * delta * T / K
========  =======================  ==================================

Rates are evaluated through the product ``G_d * phi_k``, which is finite for
every scheme, so nothing here divides by the folded spectrum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .channel import ChannelSpectrum
from .numerics import NumericalError, Quadrature, bisect
from .pulse import FoldedSpectrum, RrcPulse

__all__ = [
    "SnrMode",
    "SnrConvention",
    "Scheme",
    "Waterfill",
    "AllocationSolution",
    "CapacityResult",
    "waterfill_spatial",
    "gain_scale",
    "capacity_theorem1",
    "scheme_spectrum",
    "scheme_rate",
    "power_integral",
    "fs_capacity",
    "fs_rate_uniform",
]

EPS_G = 1e-9


class SnrMode(str, Enum):
    TRANSMIT = "tx"
    RECEIVE = "rx"


@dataclass(frozen=True)
class SnrConvention:
    """Maps a linear SNR to a transmit power.

    In transmit-fixed mode ``P = value * sigma0_2`` for every delta. In
    receive-fixed mode ``P = value * sigma0_2 / delta`` so the energy per
    symbol ``P * delta * T`` stays constant.
    """

    mode: SnrMode = SnrMode.TRANSMIT
    value: float = 100.0
    sigma0_2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", SnrMode(self.mode))
        if not self.value > 0:
            raise ValueError(f"SNR must be positive, got {self.value}")
        if not self.sigma0_2 > 0:
            raise ValueError(f"noise PSD must be positive, got {self.sigma0_2}")

    @classmethod
    def from_db(cls, mode, snr_db: float, sigma0_2: float = 1.0) -> "SnrConvention":
        return cls(mode, 10.0 ** (snr_db / 10.0), sigma0_2)

    def power(self, delta: float) -> float:
        if self.mode is SnrMode.TRANSMIT:
            return self.value * self.sigma0_2
        return self.value * self.sigma0_2 / delta


class Scheme(str, Enum):
    OsOf = "OsOf"
    SsOf = "SsOf"
    OsSf = "OsSf"
    SsSf = "SsSf"

    @property
    def spatial_optimal(self) -> bool:
        return self.value[0] == "O"

    @property
    def inverts_spectrum(self) -> bool:
        return self.value[2] == "O"


class Waterfill(NamedTuple):
    sigma2: np.ndarray
    nu: float
    degenerate: bool


@dataclass(frozen=True)
class CapacityResult:
    bits_per_symbol: float
    bits_per_s_hz: float
    regime: str
    degenerate: bool = False


def _regime(delta: float, beta: float) -> str:
    return "below-threshold" if delta * (1 + beta) < 1.0 else "above-threshold"


def waterfill_spatial(tau, P: float, c: float) -> Waterfill:
    """Maximise ``sum log2(1 + sigma_k^2 c tau_k)`` subject to ``sum sigma_k^2 = P``.

    Parameters
    ----------
    tau : array_like
        Non-negative eigenchannel gains.
    P : float
        Total power.
    c : float
        Gain scale converting ``sigma^2 * tau`` into an SNR.

    Returns
    -------
    Waterfill
        Powers in the input order, the water level ``nu`` and a flag set
        when every gain is zero (the allocation is then all zero).
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("eigenchannel gains must be non-negative")
    if not P > 0 or not c > 0:
        raise ValueError("P and c must be positive")
    sigma2 = np.zeros_like(tau)
    live = np.flatnonzero(tau > 0)
    if live.size == 0:
        return Waterfill(sigma2, 0.0, True)
    floor = 1.0 / (c * tau[live])
    order = np.argsort(floor, kind="stable")
    b = floor[order]
    csum = np.cumsum(b)
    n = b.size
    for m in range(1, b.size + 1):
        nu = (P + csum[m - 1]) / m
        if m == b.size or nu <= b[m]:
            n = m
            break
    nu = (P + csum[n - 1]) / n
    sigma2[live[order[:n]]] = nu - b[:n]
    return Waterfill(sigma2, float(nu), False)


def gain_scale(delta: float, beta: float, T: float, sigma0_2: float) -> float:
    """``delta T / (|S| sigma0^2)``: the branch-matched per-eigenchannel SNR slope."""
    measure = min(1.0, delta * (1 + beta))
    return delta * T / (measure * sigma0_2)


def capacity_theorem1(P: float, delta: float, beta: float, T: float, sigma0_2: float,
                      tau) -> CapacityResult:
    """Closed-form capacity with spatial water-filling and spectral inversion."""
    if delta == 0:
        raise ValueError("delta = 0 carries no symbols; capacity is zero by definition")
    if not 0 < delta <= 1:
        raise ValueError(f"acceleration factor delta={delta} outside (0, 1]")
    if not 0 <= beta <= 1:
        raise ValueError(f"roll-off beta={beta} outside [0, 1]")
    tau = np.asarray(tau, dtype=float)
    c = gain_scale(delta, beta, T, sigma0_2)
    wf = waterfill_spatial(tau, P, c)
    regime = _regime(delta, beta)
    if wf.degenerate:
        return CapacityResult(0.0, 0.0, regime, True)
    measure = min(1.0, delta * (1 + beta))
    per_hz = float(np.sum(np.log2(1 + wf.sigma2 * c * tau))) * measure / (delta * (1 + beta))
    return CapacityResult(per_hz * delta * (1 + beta), per_hz, regime)


@dataclass(frozen=True)
class AllocationSolution:
    """Spatial powers and data spectra for one scheme on one folded spectrum."""

    scheme: Scheme
    sigma2: np.ndarray
    nu: float | None
    fs: FoldedSpectrum
    degenerate: bool = False
    clamped: list = field(default_factory=list, compare=False)

    @property
    def delta(self) -> float:
        return self.fs.delta

    @property
    def T(self) -> float:
        return self.fs.pulse.T

    def gd_phi(self, k: int, f_n) -> np.ndarray:
        """``G_d(f_n) * phi_k(f_n)``, evaluated without inverting ``G_d``."""
        f = np.asarray(f_n, dtype=float)
        s2 = self.sigma2[k]
        if self.scheme.inverts_spectrum:
            inside = np.abs(f) <= self.fs.edge
            return np.where(inside, self.delta * self.T * s2 / self.fs.measure, 0.0)
        return self.fs(f) * s2 * self.delta * self.T

    def phi(self, k: int, f_n) -> np.ndarray:
        """Data spectrum ``phi_k(f_n)``; inversion is clamped where ``G_d`` is tiny.

        Clamped frequencies are appended to ``self.clamped``.
        """
        f = np.asarray(f_n, dtype=float)
        s2 = self.sigma2[k]
        if not self.scheme.inverts_spectrum:
            return np.full_like(f, s2 * self.delta * self.T)
        gd = self.fs(f)
        floor = EPS_G * self.fs(0.0)
        small = (gd < floor) & (np.abs(f) <= self.fs.edge)
        if np.any(small):
            self.clamped.extend(np.atleast_1d(f[small]).tolist())
        val = self.delta * self.T * s2 / (self.fs.measure * np.maximum(gd, floor))
        return np.where(np.abs(f) <= self.fs.edge, val, 0.0)


def scheme_spectrum(scheme, P: float, K: int, delta: float, beta: float, T: float,
                    tau, fs: FoldedSpectrum | None = None,
                    sigma0_2: float = 1.0) -> AllocationSolution:
    """Build the allocation for ``scheme``.

    Spatial water-filling (Os*) uses the same gain scale as the closed-form
    capacity, so it depends on ``sigma0_2``.
    """
    scheme = Scheme(scheme)
    if not 0 < delta <= 1:
        raise ValueError(f"acceleration factor delta={delta} outside (0, 1]")
    if fs is None:
        fs = FoldedSpectrum(RrcPulse(beta, T), delta)
    if fs.delta != delta or fs.pulse.beta != beta or fs.pulse.T != T:
        raise ValueError("folded spectrum does not match (delta, beta, T)")
    tau = np.asarray(tau, dtype=float)
    if tau.size != K:
        raise ValueError(f"expected {K} eigenchannel gains, got {tau.size}")
    if scheme.spatial_optimal:
        wf = waterfill_spatial(tau, P, gain_scale(delta, beta, T, sigma0_2))
        return AllocationSolution(scheme, wf.sigma2, wf.nu, fs, wf.degenerate)
    return AllocationSolution(scheme, np.full(K, P / K), None, fs)


def _half_period_nodes(fs: FoldedSpectrum, panels: int = 4, points: int = 16):
    """Composite rule on [0, edge] split at the folded spectrum's kinks."""
    q = Quadrature(panels, points)
    bp = fs.breakpoints()
    ts, ws = zip(*(q.nodes(a, b) for a, b in zip(bp[:-1], bp[1:])))
    return np.concatenate(ts), np.concatenate(ws)


def _even_integral(fs: FoldedSpectrum, fn, panels: int) -> float:
    t, w = _half_period_nodes(fs, panels)
    y = fn(t)
    if not np.all(np.isfinite(y)):
        raise NumericalError(f"integrand not finite at f_n={t[~np.isfinite(y)][0]!r}")
    return 2.0 * float(np.dot(w, y))


def power_integral(sol: AllocationSolution) -> float:
    """``(1/(delta T)) * integral over S of sum_k G_d phi_k``."""
    K = sol.sigma2.size
    tot = _even_integral(sol.fs, lambda f: sum(sol.gd_phi(k, f) for k in range(K)), 8)
    return tot / (sol.delta * sol.T)


def scheme_rate(sol: AllocationSolution, tau, sigma0_2: float,
                rel_tol: float = 1e-7) -> CapacityResult:
    """Rate of an allocation by quadrature over the support.

    Raises
    ------
    NumericalError
        If doubling the panel count moves the result by more than ``rel_tol``.
    """
    tau = np.asarray(tau, dtype=float)
    fs = sol.fs
    beta = fs.pulse.beta

    def integrand(f):
        return sum(np.log2(1 + sol.gd_phi(k, f) * tau[k] / sigma0_2)
                   for k in range(tau.size))

    coarse = _even_integral(fs, integrand, 4)
    fine = _even_integral(fs, integrand, 8)
    if abs(fine - coarse) > rel_tol * max(abs(fine), 1e-300):
        raise NumericalError(
            f"rate quadrature not converged: relative change {abs(fine - coarse) / abs(fine):.3g}")
    return CapacityResult(fine, fine / (sol.delta * (1 + beta)),
                          _regime(sol.delta, beta), sol.degenerate)


def _grid(fs: FoldedSpectrum, grid_size: int):
    if grid_size < 256:
        raise ValueError(f"grid size {grid_size} below the minimum of 256")
    f = np.linspace(-fs.edge, fs.edge, grid_size)
    return f


def fs_capacity(spec: ChannelSpectrum, fs: FoldedSpectrum, P: float, sigma0_2: float,
                grid_size: int = 2048) -> CapacityResult:
    """Capacity of a frequency-selective channel with joint space-frequency water-filling.

    The eigenmodes of the noise-whitened effective Gram are water-filled with
    one global level ``nu`` so that ``(1/(delta T)) * integral sum_i phi_i = P``.
    Only the ``min(K, L)`` strongest modes are used.
    """
    delta, T, beta = fs.delta, fs.pulse.T, fs.pulse.beta
    if spec.delta != delta:
        raise ValueError("channel spectrum and folded spectrum disagree on delta")
    f = _grid(fs, grid_size)
    ch = spec.channel
    tau = spec.eigenmodes(f, fs)[:, : min(ch.K, ch.L)]
    regime = _regime(delta, beta)
    live = tau > 0
    if not np.any(live):
        return CapacityResult(0.0, 0.0, regime, True)
    floor = np.where(live, sigma0_2 / np.where(live, tau, 1.0), np.inf)

    def alloc(nu):
        return np.where(live, np.maximum(nu - floor, 0.0), 0.0)

    def excess(nu):
        return np.trapezoid(alloc(nu).sum(axis=1), f) / (delta * T) - P

    hi = P * delta * T / fs.measure + float(np.max(floor[live]))
    while excess(hi) < 0:
        hi *= 2.0
    nu = bisect(excess, 0.0, hi, tol=1e-12)
    phi = alloc(nu)
    rate = np.log2(1 + phi * np.where(live, tau, 0.0) / sigma0_2).sum(axis=1)
    bps = float(np.trapezoid(rate, f))
    return CapacityResult(bps, bps / (delta * (1 + beta)), regime)


def fs_rate_uniform(spec: ChannelSpectrum, fs: FoldedSpectrum, P: float,
                    sigma0_2: float, grid_size: int = 2048) -> float:
    """Bits per symbol for i.i.d. inputs of energy ``P delta T / K`` on every antenna."""
    delta, T = fs.delta, fs.pulse.T
    f = _grid(fs, grid_size)
    K = spec.channel.K
    tau = spec.eigenmodes(f, fs)
    gd = fs(f)
    rate = np.log2(1 + gd[:, None] * (P * delta * T / K) * tau / sigma0_2).sum(axis=1)
    return float(np.trapezoid(rate, f))
