"""MIMO channel models: flat Rayleigh and tapped-delay frequency-selective."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import RandomSource, hermitian_eig
from .pulse import FoldedSpectrum, rc_spectrum

__all__ = [
    "FlatMimoChannel",
    "TappedDelayChannel",
    "ChannelSpectrum",
    "sample_flat",
    "sample_fs",
    "eigenmodes_flat",
    "channel_spectrum",
    "write_channel_csv",
    "read_channel_csv",
]

_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class FlatMimoChannel:
    """Flat-fading channel with an ``L x K`` complex gain matrix ``H``."""

    H: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=complex)
        if H.ndim != 2:
            raise ValueError(f"H must be a matrix, got shape {H.shape}")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    @property
    def W(self) -> np.ndarray:
        return self.H.conj().T @ self.H


@dataclass(frozen=True)
class TappedDelayChannel:
    """Tapped delay line: ``gains[j]`` is the ``L x K`` matrix at delay ``delays[j]``.

    Delays are in seconds and must be strictly increasing.
    """

    delays: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        d = np.array(self.delays, dtype=float).ravel()
        h = np.array(self.gains, dtype=complex)
        if h.ndim == 2:
            h = h[None]
        if h.ndim != 3 or h.shape[0] != d.size:
            raise ValueError(f"gains shape {h.shape} does not match {d.size} delays")
        if d.size < 1:
            raise ValueError("need at least one tap")
        if np.any(d < 0) or np.any(np.diff(d) <= 0):
            raise ValueError("delays must be non-negative and strictly increasing")
        d.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "gains", h)

    @property
    def J(self) -> int:
        return self.delays.size

    @property
    def L(self) -> int:
        return self.gains.shape[1]

    @property
    def K(self) -> int:
        return self.gains.shape[2]

    @classmethod
    def from_flat(cls, ch: FlatMimoChannel) -> "TappedDelayChannel":
        return cls(np.zeros(1), ch.H[None])


def sample_flat(K: int, L: int, src: RandomSource) -> FlatMimoChannel:
    """i.i.d. CN(0, 1/K) entries."""
    if K < 1 or L < 1:
        raise ValueError("K and L must be at least 1")
    return FlatMimoChannel(src.complex_normal((L, K), 1.0 / K))


def sample_fs(K: int, L: int, J: int, delay_range: float,
              src: RandomSource) -> TappedDelayChannel:
    """``J`` taps with delays uniform on [0, delay_range) and CN(0, 1/(KJ)) gains."""
    if J < 1:
        raise ValueError("J must be at least 1")
    if not delay_range > 0:
        raise ValueError("delay range must be positive")
    if K < 1 or L < 1:
        raise ValueError("K and L must be at least 1")
    delays = np.sort(src.uniform(J) * delay_range)
    gains = src.complex_normal((J, L, K), 1.0 / (K * J))
    return TappedDelayChannel(delays, gains)


def _clamp(tau: np.ndarray) -> np.ndarray:
    return np.where(tau < _CLAMP_TOL, 0.0, tau)


def eigenmodes_flat(ch: FlatMimoChannel) -> np.ndarray:
    """Eigenvalues of ``H^H H``, descending, with round-off negatives set to 0."""
    lam, _ = hermitian_eig(ch.W)
    return _clamp(lam)


class ChannelSpectrum:
    """Frequency response of a tapped delay channel on the normalised period.

    ``H(f_n)`` returns ``sum_i h^i exp(-j 2 pi f_n d_i / (delta T))`` with
    shape ``(n, L, K)``; ``Z`` is its Gram ``H^H H``.
    """

    def __init__(self, ch: TappedDelayChannel, delta: float, T: float):
        if not 0.0 < delta <= 1.0:
            raise ValueError(f"acceleration factor delta={delta} outside (0, 1]")
        self.channel = ch
        self.delta = float(delta)
        self.T = float(T)

    def _response(self, f) -> np.ndarray:
        f = np.atleast_1d(np.asarray(f, dtype=float))
        ph = np.exp(-2j * np.pi * np.outer(f, self.channel.delays) / (self.delta * self.T))
        return np.einsum("nj,jlk->nlk", ph, self.channel.gains)

    def H(self, f_n) -> np.ndarray:
        return self._response(f_n)

    def Z(self, f_n) -> np.ndarray:
        H = self.H(f_n)
        return np.einsum("nlk,nlm->nkm", H.conj(), H)

    def effective_gram(self, f_n, fs: FoldedSpectrum) -> np.ndarray:
        """Noise-whitened Gram ``B^H B / G_d^2`` including aliased spectral copies.

        ``B(f) = sum_m (1/(delta T)) G((f - m)/(delta T)) H(f - m)`` is the
        generating function of ``sum_j h^j (x) G^j``. With a single copy on the
        support (at or below the threshold) it reduces to ``Z``.
        """
        f = np.atleast_1d(np.asarray(f_n, dtype=float))
        if fs.below_threshold:
            return self.Z(f)
        dT = self.delta * self.T
        M = int(np.ceil(self.delta * (1 + fs.pulse.beta) / 2)) + 1
        B = np.zeros((f.size, self.channel.L, self.channel.K), dtype=complex)
        Gd = np.zeros(f.size)
        for m in range(-M, M + 1):
            w = rc_spectrum(fs.pulse, (f - m) / dT) / dT
            if not np.any(w):
                continue
            B += w[:, None, None] * self._response(f - m)
            Gd += w
        Z = np.einsum("nlk,nlm->nkm", B.conj(), B)
        ok = Gd > 1e-12 * max(Gd.max(), 1e-300)
        out = self.Z(f)
        out[ok] = Z[ok] / (Gd[ok] ** 2)[:, None, None]
        return out

    def eigenmodes(self, f_n, fs: FoldedSpectrum | None = None) -> np.ndarray:
        """Descending eigenvalues, shape ``(n, K)``; aliasing-aware when ``fs`` is given."""
        Z = self.Z(f_n) if fs is None else self.effective_gram(f_n, fs)
        lam, _ = hermitian_eig(0.5 * (Z + np.conj(np.swapaxes(Z, 1, 2))))
        return _clamp(np.atleast_2d(lam))


def channel_spectrum(ch: TappedDelayChannel | FlatMimoChannel, delta: float,
                     T: float) -> ChannelSpectrum:
    if isinstance(ch, FlatMimoChannel):
        ch = TappedDelayChannel.from_flat(ch)
    return ChannelSpectrum(ch, delta, T)


_CSV_HEADER = ["tap", "delay_s", "l", "k", "re", "im"]


def write_channel_csv(ch: TappedDelayChannel | FlatMimoChannel, path) -> None:
    """Write a realization as one row per (tap, l, k) entry."""
    if isinstance(ch, FlatMimoChannel):
        ch = TappedDelayChannel.from_flat(ch)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for j in range(ch.J):
            for l in range(ch.L):
                for k in range(ch.K):
                    g = ch.gains[j, l, k]
                    w.writerow([j, f"{ch.delays[j]:.17g}", l, k,
                                f"{g.real:.17g}", f"{g.imag:.17g}"])


def read_channel_csv(path) -> TappedDelayChannel:
    rows = list(csv.DictReader(Path(path).open(encoding="utf-8")))
    if not rows:
        raise ValueError(f"{path}: no channel entries")
    J = 1 + max(int(r["tap"]) for r in rows)
    L = 1 + max(int(r["l"]) for r in rows)
    K = 1 + max(int(r["k"]) for r in rows)
    delays = np.zeros(J)
    gains = np.zeros((J, L, K), dtype=complex)
    for r in rows:
        j = int(r["tap"])
        delays[j] = float(r["delay_s"])
        gains[j, int(r["l"]), int(r["k"])] = complex(float(r["re"]), float(r["im"]))
    return TappedDelayChannel(delays, gains)
