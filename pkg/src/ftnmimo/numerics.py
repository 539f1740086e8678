"""Numerical kernels shared by the rest of the package.

Bessel functions of the first kind (orders 0 and 1), composite
Gauss-Legendre quadrature, panel summation of semi-infinite oscillatory
integrals, a cyclic Jacobi eigensolver for small Hermitian matrices,
bisection, and a counter-based random source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

__all__ = [
    "NumericalError",
    "ConvergenceError",
    "Quadrature",
    "RandomSource",
    "bessel_j0",
    "bessel_j1",
    "integrate",
    "refine_check",
    "integrate_semi_infinite_oscillatory",
    "oscillatory_panel_sums",
    "hermitian_eig",
    "bisect",
    "gaussian_pair",
]


class NumericalError(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """Iteration cap reached before the stopping rule was met."""

    def __init__(self, message: str, value: float, last_panel: float):
        super().__init__(f"{message} (accumulated={value:.6g}, last panel={last_panel:.3g})")
        self.value = value
        self.last_panel = last_panel


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------

# Power series below the switchover, Hankel expansion above. At x=12 the
# smallest Hankel term is ~1e-11 and the largest series term ~4e3, so both
# branches hold 1e-10 absolute accuracy there.
_BESSEL_SWITCH = 12.0
_SERIES_TERMS = 48
_HANKEL_TERMS = 40


def _check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        bad = x[~np.isfinite(x)].ravel()[0]
        raise ValueError(f"{name}: non-finite argument {bad!r}")


def _series(x: np.ndarray, order: int) -> np.ndarray:
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * (k + order))
        total = total + term
    if order == 1:
        return 0.5 * x * total
    return total


def _hankel(x: np.ndarray, order: int) -> np.ndarray:
    mu = 4.0 * order * order
    z = 8.0 * x
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    last = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _HANKEL_TERMS):
        term = term * (mu - (2 * k - 1) ** 2) / (k * z)
        mag = np.abs(term)
        # stop each abscissa at its smallest term (asymptotic series)
        active &= mag < last
        last = np.where(active, mag, last)
        contrib = np.where(active, term, 0.0)
        # k odd -> Q gets (-1)^((k-1)/2) term; k even -> P gets (-1)^(k/2) term
        if k % 2:
            q = q + (1 if (k // 2) % 2 == 0 else -1) * contrib
        else:
            p = p + (1 if (k // 2) % 2 == 0 else -1) * contrib
        if not active.any():
            break
    chi = x - (2 * order + 1) * math.pi / 4.0
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def _bessel(x, order: int, name: str):
    arr = np.asarray(x, dtype=float)
    _check_finite(arr, name)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    small = ax < _BESSEL_SWITCH
    if small.any():
        out[small] = _series(ax[small], order)
    if (~small).any():
        out[~small] = _hankel(ax[~small], order)
    if order == 1:
        out = np.where(arr < 0, -out, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def bessel_j0(x):
    """Bessel function of the first kind, order zero (scalar or array)."""
    return _bessel(x, 0, "bessel_j0")


def bessel_j1(x):
    """Bessel function of the first kind, order one (scalar or array)."""
    return _bessel(x, 1, "bessel_j1")


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _legendre(points: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(points)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class Quadrature:
    """Composite Gauss-Legendre rule: ``panels`` equal panels of ``points`` nodes."""

    panels: int = 16
    points: int = 16
    rule: str = field(default="gauss-legendre-composite")

    def __post_init__(self):
        if self.rule != "gauss-legendre-composite":
            raise ValueError(f"unsupported quadrature rule {self.rule!r}")
        if self.panels < 1 or self.points < 1:
            raise ValueError("panels and points must be positive")

    def nodes(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
        """Abscissae and weights on [a, b]."""
        x, w = _legendre(self.points)
        edges = np.linspace(a, b, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        wt = (half[:, None] * w[None, :]).ravel()
        return t, wt

    def refined(self) -> "Quadrature":
        return Quadrature(self.panels * 2, self.points, self.rule)


def integrate(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
              q: Quadrature = Quadrature()) -> float:
    """Integrate a vectorised ``f`` over [a, b] with the composite rule ``q``."""
    if not a <= b:
        raise ValueError(f"integration bounds out of order: a={a}, b={b}")
    if a == b:
        return 0.0
    t, w = q.nodes(a, b)
    y = np.broadcast_to(np.asarray(f(t), dtype=float), t.shape)
    if not np.all(np.isfinite(y)):
        bad = t[~np.isfinite(y)][0]
        raise NumericalError(f"integrand is not finite at x={bad!r}")
    return float(np.dot(w, y))


def refine_check(f, a: float, b: float, q: Quadrature = Quadrature()) -> tuple[float, float]:
    """Return ``(value, relative change when the panel count is doubled)``."""
    coarse = integrate(f, a, b, q)
    fine = integrate(f, a, b, q.refined())
    scale = max(abs(fine), np.finfo(float).tiny)
    return fine, abs(fine - coarse) / scale


def oscillatory_panel_sums(f: Callable[[np.ndarray], np.ndarray], panel_width: float,
                           zero_spacing, tail_tol: float, *, points: int = 16,
                           max_panels: int = 20000, block: int = 64,
                           start: float = 0.0) -> np.ndarray:
    """Panel summation of several integrals over [start, inf) sharing nodes.

    ``f`` maps an array of nodes of shape ``(n,)`` to values of shape
    ``(m, n)``, one row per integrand. Row ``i`` stops once three
    consecutive stretches of length ``zero_spacing[i]`` each contribute
    less than ``tail_tol`` in absolute value; ``panel_width`` must not
    exceed the smallest zero spacing. The returned estimate counts the
    last stretch with weight 1/2, which cancels the leading error of an
    alternating tail.
    """
    spacing = np.atleast_1d(np.asarray(zero_spacing, dtype=float))
    if panel_width <= 0 or np.any(spacing < panel_width * (1 - 1e-12)):
        raise ValueError("panel_width must be positive and no larger than every zero spacing")
    group = np.maximum(1, np.floor(spacing / panel_width + 1e-9)).astype(int)
    m = spacing.size
    x, w = _legendre(points)
    half = 0.5 * panel_width

    total = np.zeros(m)          # sum over completed groups
    current = np.zeros(m)        # running sum inside the open group
    filled = np.zeros(m, dtype=int)
    small_run = np.zeros(m, dtype=int)
    last_group = np.zeros(m)
    done = np.zeros(m, dtype=bool)
    result = np.zeros(m)

    panel = 0
    while not done.all():
        if panel >= max_panels:
            i = int(np.flatnonzero(~done)[0])
            raise ConvergenceError(
                f"oscillatory integral did not settle within {max_panels} panels",
                float(total[i] + current[i]), float(last_group[i]))
        nb = min(block, max_panels - panel)
        left = start + panel_width * (panel + np.arange(nb))
        nodes = ((left + half)[:, None] + half * x[None, :]).ravel()
        vals = np.asarray(f(nodes), dtype=float).reshape(m, nb, points)
        if not np.all(np.isfinite(vals)):
            raise NumericalError("oscillatory integrand produced non-finite values")
        contrib = half * np.einsum("mbp,p->mb", vals, w)
        for j in range(nb):
            live = ~done
            current[live] += contrib[live, j]
            filled[live] += 1
            closing = live & (filled == group)
            if closing.any():
                c = current[closing]
                total[closing] += c
                last_group[closing] = c
                small = np.abs(c) < tail_tol
                run = np.where(small, small_run[closing] + 1, 0)
                small_run[closing] = run
                current[closing] = 0.0
                filled[closing] = 0
                stop = np.zeros(m, dtype=bool)
                stop[np.flatnonzero(closing)[run >= 3]] = True
                result[stop] = total[stop] - 0.5 * last_group[stop]
                done |= stop
        panel += nb
    return result


def integrate_semi_infinite_oscillatory(f: Callable[[np.ndarray], np.ndarray],
                                        zero_spacing: float, tail_tol: float, *,
                                        points: int = 16, max_panels: int = 20000) -> float:
    """Integrate ``f`` over [0, inf) in panels one zero spacing wide.

    Intended for integrands such as ``J1(a x) * envelope(x)`` where the
    envelope decays. Raises :class:`ConvergenceError` with the accumulated
    value if the tail criterion is not met within ``max_panels`` panels.
    """
    def rows(t):
        return np.asarray(f(t), dtype=float)[None, :]

    return float(oscillatory_panel_sums(rows, zero_spacing, [zero_spacing], tail_tol,
                                        points=points, max_panels=max_panels)[0])


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def hermitian_eig(A, *, max_sweeps: int = 100, tol: float = 1e-13):
    """Eigen-decomposition of Hermitian matrices by cyclic Jacobi rotations.

    Accepts a single ``(n, n)`` matrix or a stack ``(..., n, n)``; every
    matrix in the stack is rotated together. Returns eigenvalues sorted in
    descending order and the unitary matrix of eigenvectors (columns).
    """
    a = np.array(A, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    n = a.shape[-1]
    if n > 16:
        raise ValueError(f"hermitian_eig supports dimension <= 16, got {n}")
    single = a.ndim == 2
    a = a.reshape((-1, n, n))
    scale = np.max(np.abs(a), axis=(1, 2))
    asym = np.max(np.abs(a - np.conj(np.swapaxes(a, 1, 2))), axis=(1, 2))
    bad = asym > 1e-10 * np.where(scale > 0, scale, 1.0)
    if bad.any():
        raise ValueError(f"matrix is not Hermitian: max asymmetry {asym[bad].max():.3e}")
    a = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))
    b = a.shape[0]
    v = np.broadcast_to(np.eye(n, dtype=complex), (b, n, n)).copy()
    thresh = tol * np.where(scale > 0, scale, 1.0)
    rows = np.arange(b)

    for _ in range(max_sweeps):
        off = np.max(np.abs(a - np.einsum("bii->bi", a)[:, :, None] * np.eye(n)), axis=(1, 2)) if n > 1 else np.zeros(b)
        if np.all(off <= thresh):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                mag = np.abs(apq)
                act = mag > thresh
                if not act.any():
                    continue
                phase = np.where(act, apq / np.where(act, mag, 1.0), 1.0)
                app = a[:, p, p].real
                aqq = a[:, q, q].real
                theta = np.where(act, (aqq - app) / (2.0 * np.where(act, mag, 1.0)), 0.0)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
                t = np.where(act, t, 0.0)
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                # J = [[c, s], [-s*conj(phase), c*conj(phase)]] on (p, q)
                jpp, jpq = c, s + 0j
                jqp, jqq = -s * np.conj(phase), c * np.conj(phase)
                colp = a[:, :, p].copy()
                colq = a[:, :, q].copy()
                a[:, :, p] = colp * jpp[:, None] + colq * jqp[:, None]
                a[:, :, q] = colp * jpq[:, None] + colq * jqq[:, None]
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :].copy()
                a[:, p, :] = np.conj(jpp)[:, None] * rowp + np.conj(jqp)[:, None] * rowq
                a[:, q, :] = np.conj(jpq)[:, None] * rowp + np.conj(jqq)[:, None] * rowq
                a[rows, p, q] = 0.0
                a[rows, q, p] = 0.0
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = vp * jpp[:, None] + vq * jqp[:, None]
                v[:, :, q] = vp * jpq[:, None] + vq * jqq[:, None]
    else:
        raise NumericalError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    lam = np.einsum("bii->bi", a).real
    order = np.argsort(-lam, axis=1, kind="stable")
    lam = np.take_along_axis(lam, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    if single:
        return lam[0], v[0]
    shape = np.shape(A)[:-2]
    return lam.reshape(shape + (n,)), v.reshape(shape + (n, n))


# ---------------------------------------------------------------------------
# Root finding
# ---------------------------------------------------------------------------


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12,
           max_iter: int = 400) -> float:
    """Root of a monotone ``f`` on [lo, hi] by interval halving."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise ValueError(f"bisect: f(lo)={flo:.6g} and f(hi)={fhi:.6g} have the same sign")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            return mid
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------


class RandomSource:
    """Philox-4x64 counter-based stream keyed by (master seed, stream index).

    Normal deviates are produced with the Box-Muller transform from the
    stream's uniforms, so the normal path does not depend on numpy's
    ziggurat implementation.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        if stream_index < 0:
            raise ValueError("stream_index must be non-negative")
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_index = int(stream_index)
        self.reset()

    def reset(self) -> None:
        bitgen = np.random.Philox(key=np.array([self.master_seed, self.stream_index],
                                               dtype=np.uint64))
        self._gen = np.random.Generator(bitgen)

    def spawn(self, stream_index: int) -> "RandomSource":
        return RandomSource(self.master_seed, stream_index)

    def uniform(self, size=None) -> np.ndarray:
        """Uniform deviates on [0, 1)."""
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        """Standard normal deviates (Box-Muller)."""
        count = int(np.prod(size))
        pairs = (count + 1) // 2
        u1 = 1.0 - self._gen.random(pairs)     # (0, 1]
        u2 = self._gen.random(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return z[:count].reshape(size)

    def complex_normal(self, size, variance: float = 1.0) -> np.ndarray:
        """Circularly symmetric complex Gaussian with E|z|^2 = variance."""
        z = self.normal((2,) + tuple(np.atleast_1d(size)))
        return np.sqrt(variance / 2.0) * (z[0] + 1j * z[1])

    def signs(self, size) -> np.ndarray:
        """Equiprobable +1/-1 values."""
        return np.where(self._gen.random(size) < 0.5, -1.0, 1.0)


def gaussian_pair(src: RandomSource) -> tuple[float, float]:
    """Two independent standard normal deviates from one Box-Muller step."""
    u1 = 1.0 - float(src.uniform())
    u2 = float(src.uniform())
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(2 * math.pi * u2), r * math.sin(2 * math.pi * u2)
