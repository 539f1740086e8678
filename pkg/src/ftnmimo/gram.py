"""Finite-N Toeplitz oracle for the frequency-domain capacity formulas."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import lapack, toeplitz

from .capacity import Scheme, scheme_rate, scheme_spectrum
from .channel import FlatMimoChannel, TappedDelayChannel, eigenmodes_flat
from .numerics import NumericalError
from .pulse import FoldedSpectrum, RrcPulse, rc_autocorr

__all__ = [
    "GramMatrix",
    "ShiftedGram",
    "SzegoRow",
    "ConditioningWarning",
    "build_gram",
    "build_shifted_gram",
    "finite_n_rate",
    "szego_gap",
    "fs_finite_n_rate",
]

MAX_N_FLAT = 2048
MAX_N_FS = 512
PINV_FLOOR = 1e-10


class ConditioningWarning(UserWarning):
    """Raised when the Gram pseudo-inverse discards near-null eigenvalues."""


@dataclass(frozen=True)
class ShiftedGram:
    """Toeplitz matrix ``(G^j)_{m,n} = g((m - n) delta T - d)``."""

    pulse: RrcPulse
    delta: float
    N: int
    d: float
    column: np.ndarray
    row: np.ndarray

    @property
    def dense(self) -> np.ndarray:
        return toeplitz(self.column, self.row)


@dataclass(frozen=True)
class GramMatrix(ShiftedGram):
    """Symmetric Toeplitz Gram ``(G)_{n,m} = g((n - m) delta T)``."""


def _check(N: int, delta: float, cap: int):
    if N < 1:
        raise ValueError(f"block length N={N} must be at least 1")
    if N > cap:
        raise ValueError(f"dense assembly capped at N={cap}, got {N}")
    if not 0 < delta <= 1:
        raise ValueError(f"acceleration factor delta={delta} outside (0, 1]")


def build_gram(pulse: RrcPulse, delta: float, N: int) -> GramMatrix:
    _check(N, delta, MAX_N_FLAT)
    c = rc_autocorr(pulse, np.arange(N) * delta * pulse.T)
    c = np.atleast_1d(c)
    return GramMatrix(pulse, delta, N, 0.0, c, c)


def build_shifted_gram(pulse: RrcPulse, delta: float, d: float, N: int) -> ShiftedGram:
    _check(N, delta, MAX_N_FLAT)
    k = np.arange(N) * delta * pulse.T
    col = np.atleast_1d(rc_autocorr(pulse, k - d))
    row = np.atleast_1d(rc_autocorr(pulse, -k - d))
    if d == 0:
        return GramMatrix(pulse, delta, N, 0.0, col, row)
    return ShiftedGram(pulse, delta, N, float(d), col, row)


def _sqrt_cov(cov, n: int) -> np.ndarray:
    """Hermitian square root of the input covariance; scalars and diagonals allowed."""
    cov = np.asarray(cov)
    if cov.ndim == 0:
        if cov < 0:
            raise ValueError("input covariance must be positive semidefinite")
        return np.sqrt(float(cov)) * np.eye(n)
    if cov.ndim == 1:
        if cov.size != n or np.any(cov < 0):
            raise ValueError("diagonal input covariance must be non-negative with size K*N")
        return np.diag(np.sqrt(cov.astype(float)))
    if cov.shape != (n, n):
        raise ValueError(f"input covariance shape {cov.shape}, expected {(n, n)}")
    lam, V = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    if lam.min() < -1e-9 * max(lam.max(), 1.0):
        raise ValueError("input covariance is not positive semidefinite")
    return (V * np.sqrt(np.clip(lam, 0, None))) @ V.conj().T


def _logdet_chol(M: np.ndarray) -> float:
    """Natural log-determinant of a Hermitian positive-definite matrix."""
    c, info = lapack.zpotrf(np.asarray(M, dtype=complex), lower=1)
    if info > 0:
        raise NumericalError(f"Cholesky factorization broke down at pivot {info - 1}")
    if info < 0:
        raise NumericalError(f"invalid argument {-info} passed to the factorization")
    return 2.0 * float(np.sum(np.log(np.real(np.diag(c)))))


def _rate_from_quadratic(Q: np.ndarray, cov, sigma0_2: float, N: int) -> float:
    n = Q.shape[0]
    S = _sqrt_cov(cov, n)
    M = np.eye(n) + (S.conj().T @ Q @ S) / sigma0_2
    M = 0.5 * (M + M.conj().T)
    return float(_logdet_chol(M) / (N * np.log(2.0)))


def finite_n_rate(ch: FlatMimoChannel, G: GramMatrix, cov, sigma0_2: float) -> float:
    """``(1/N) log2 det(I + Sigma^{1/2} (W kron G) Sigma^{1/2} / sigma0^2)``.

    ``cov`` may be a scalar (multiple of identity), a length-``K N`` diagonal
    or a full ``K N x K N`` matrix. Symbols are ordered antenna-major.
    """
    Q = np.kron(ch.W, G.dense)
    return _rate_from_quadratic(Q, cov, sigma0_2, G.N)


class SzegoRow(NamedTuple):
    N: int
    finite_rate: float
    limit_rate: float
    rel_gap: float


def szego_gap(ch: FlatMimoChannel, pulse: RrcPulse, delta: float, P: float,
              sigma0_2: float, N_list) -> list[SzegoRow]:
    """Finite-N rates for i.i.d. inputs against their frequency-domain limit.

    Both rates are in bits per symbol interval (summed over antennas).
    """
    K = ch.K
    tau = eigenmodes_flat(ch)
    fs = FoldedSpectrum(pulse, delta)
    sol = scheme_spectrum(Scheme.SsSf, P, K, delta, pulse.beta, pulse.T, tau, fs, sigma0_2)
    limit = scheme_rate(sol, tau, sigma0_2).bits_per_symbol
    rows = []
    for N in N_list:
        G = build_gram(pulse, delta, int(N))
        fin = finite_n_rate(ch, G, P * delta * pulse.T / K, sigma0_2)
        gap = abs(fin - limit) / limit if limit > 0 else abs(fin - limit)
        rows.append(SzegoRow(int(N), float(fin), float(limit), float(gap)))
    return rows


def _floored_pinv(G: np.ndarray) -> tuple[np.ndarray, int]:
    lam, V = np.linalg.eigh(G)
    keep = lam >= PINV_FLOOR * lam.max()
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    return (V * inv) @ V.T, int(np.count_nonzero(~keep))


def fs_finite_n_rate(ch: TappedDelayChannel, pulse: RrcPulse, delta: float, N: int,
                     cov, sigma0_2: float) -> float:
    """Finite-N rate of the tapped delay model with coloured matched-filter noise.

    Evaluates ``(1/N) log2 det(I + Sigma^{1/2} M^H (I_L kron G^+) M Sigma^{1/2} / sigma0^2)``
    with ``M = sum_j h^j kron G^j``. ``G^+`` drops eigenvalues below
    ``1e-10 * lambda_max``; a :class:`ConditioningWarning` reports how many.
    """
    if N > MAX_N_FS:
        raise ValueError(f"dense FS assembly capped at N={MAX_N_FS}, got {N}")
    G = build_gram(pulse, delta, N).dense
    Ginv, dropped = _floored_pinv(G)
    if dropped:
        warnings.warn(f"Gram pseudo-inverse floored {dropped} of {N} eigenvalues",
                      ConditioningWarning, stacklevel=2)
    M = sum(np.kron(ch.gains[j], build_shifted_gram(pulse, delta, ch.delays[j], N).dense)
            for j in range(ch.J))
    Q = M.conj().T @ np.kron(np.eye(ch.L), Ginv) @ M
    return _rate_from_quadratic(Q, cov, sigma0_2, N)
