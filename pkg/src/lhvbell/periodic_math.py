"""Quadrature, cosine series and autocorrelation for even pi-periodic functions.

Every function in this package lives on the half-turn period pi: a
polarization angle chi and chi + pi describe the same physical state.  A
function is represented by its samples on the uniform grid

    x_i = -pi/2 + i*pi/N,   i = 0 .. N-1   (N even),

which puts x = 0 on the grid so that evenness can be checked by mirroring
indices.  The rectangle rule on this grid integrates smooth periodic
functions with spectral accuracy and is exact for cosine polynomials of
degree below N/2, which is all the accuracy the model calculus needs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

PERIOD = math.pi

#: tolerance used for the evenness check of sampled functions
EVEN_TOL = 1e-12

_GRID_ENV = "LHVBELL_GRID_N"


def default_grid_n() -> int:
    """Default grid size, overridable through the LHVBELL_GRID_N env var."""
    raw = os.environ.get(_GRID_ENV)
    if raw is None:
        return 2048
    n = int(raw)
    if n < 8 or n % 2:
        raise ValueError(f"{_GRID_ENV} must be an even integer >= 8, got {raw}")
    return n


def grid(n: int) -> np.ndarray:
    """The sample points x_i = -pi/2 + i*pi/n."""
    if n < 8 or n % 2:
        raise ValueError(f"grid size must be an even integer >= 8, got {n}")
    return -PERIOD / 2 + PERIOD * np.arange(n) / n


def wrap_angle(x):
    """Reduce an angle to the principal period [-pi/2, pi/2)."""
    return (np.asarray(x) + PERIOD / 2) % PERIOD - PERIOD / 2


@dataclass(frozen=True)
class PeriodicFn:
    """A real pi-periodic function sampled on the uniform grid.

    The samples array is frozen (read-only) so instances can be shared
    between threads without copying.
    """

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size < 8 or samples.size % 2:
            raise ValueError("grid size must be an even integer >= 8")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples = samples.copy()
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def h(self) -> float:
        return PERIOD / self.n

    @property
    def x(self) -> np.ndarray:
        return grid(self.n)

    @classmethod
    def from_callable(cls, f, n: int | None = None) -> "PeriodicFn":
        n = default_grid_n() if n is None else n
        return cls(np.asarray(f(grid(n)), dtype=float))

    def is_even(self, tol: float = EVEN_TOL) -> bool:
        """Whether f(x) = f(-x) on the grid.

        -x_i lands back on the grid at index (N - i) mod N, so the check is
        an exact index mirror, no interpolation involved.
        """
        mirrored = np.roll(self.samples[::-1], 1)
        return bool(np.max(np.abs(self.samples - mirrored)) <= tol)

    def is_nonincreasing_in_abs(self, tol: float = EVEN_TOL) -> bool:
        """Whether the samples do not increase with |x|."""
        half = self.samples[self.n // 2:]  # x = 0 .. pi/2 - h
        return bool(np.all(np.diff(half) <= tol))

    def value_at(self, x) -> np.ndarray:
        """Evaluate by periodic linear interpolation of the samples."""
        x = np.asarray(x, dtype=float)
        pos = (x + PERIOD / 2) / self.h
        i0 = np.floor(pos).astype(int)
        t = pos - i0
        i0 = i0 % self.n
        i1 = (i0 + 1) % self.n
        return (1.0 - t) * self.samples[i0] + t * self.samples[i1]


@dataclass(frozen=True)
class CosineSeries:
    """An even cosine polynomial  sum_k coeffs[k] * cos(2 k x)."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float).copy()
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("coeffs must be a non-empty 1-d array")
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def k_max(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, x) -> np.ndarray:
        return eval_series(self, x)

    def to_periodic(self, n: int | None = None) -> PeriodicFn:
        n = default_grid_n() if n is None else n
        return PeriodicFn(eval_series(self, grid(n)))


def integrate_periodic(f: PeriodicFn) -> float:
    """Integral over one period by the rectangle rule, (pi/N) * sum f_i.

    Exact for cosine polynomials with harmonics below N/2; spectrally
    accurate for smooth periodic integrands.
    """
    return f.h * float(np.sum(f.samples))


def cosine_moment(f: PeriodicFn, k: int) -> float:
    """The moment  integral f(x) cos(2 k x) dx  over one period."""
    if k < 0:
        raise ValueError("harmonic index must be >= 0")
    if k == 0:
        return integrate_periodic(f)
    return f.h * float(np.sum(f.samples * np.cos(2 * k * f.x)))


def to_series(f: PeriodicFn, k_max: int) -> CosineSeries:
    """Cosine coefficients A_k of an even function, k = 0 .. k_max.

    A_0 = (1/pi) * integral f,  A_k = (2/pi) * integral f cos(2kx) for k >= 1.
    Requires k_max <= N/4 so the coefficients are safely below the aliasing
    limit of the grid.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    if k_max > f.n // 4:
        raise ValueError(
            f"insufficient resolution: k_max={k_max} needs a grid of at "
            f"least {4 * k_max} points, have {f.n}"
        )
    if not f.is_even(1e-9):
        raise ValueError("cosine series requires an even function")
    x = f.x
    coeffs = np.empty(k_max + 1)
    coeffs[0] = integrate_periodic(f) / PERIOD
    for k in range(1, k_max + 1):
        coeffs[k] = 2.0 / PERIOD * f.h * float(np.sum(f.samples * np.cos(2 * k * x)))
    return CosineSeries(coeffs)


def eval_series(series: CosineSeries, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, series.coeffs[0], dtype=float)
    for k in range(1, series.coeffs.size):
        out += series.coeffs[k] * np.cos(2 * k * x)
    return out


def _circular_xcorr(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """g[k] = h * sum_m a[m + k] b[m]  with periodic indexing (lag grid k*h)."""
    fa = np.fft.rfft(a)
    fb = np.fft.rfft(b)
    return h * np.fft.irfft(fa * np.conj(fb), n=a.size)


def autocorrelate(p: PeriodicFn) -> PeriodicFn:
    """The overlap function  f(y) = integral P(x + y/2) P(x - y/2) dx.

    By the substitution u = x + y/2 this equals the circular
    autocorrelation integral P(u) P(u - y) du, which the uniform grid
    evaluates exactly at every lag that is a multiple of the grid step.
    The result is returned on the standard grid (f at x_k means lag x_k).

    Requires an even P with values in [0, 1]; the output is even, peaks at
    lag zero, and its k-th cosine moment equals the square of P's k-th
    moment.
    """
    if not p.is_even(1e-9):
        raise ValueError("autocorrelation requires an even function")
    if np.min(p.samples) < -EVEN_TOL or np.max(p.samples) > 1 + EVEN_TOL:
        raise ValueError("detection-style function must take values in [0, 1]")
    lagged = _circular_xcorr(p.samples, p.samples, p.h)
    # lagged[k] is the value at lag k*h; re-anchor to the -pi/2 grid, where
    # index i means lag x_i = -pi/2 + i*h.
    return PeriodicFn(np.roll(lagged, p.n // 2))


def cross_correlate(p1: PeriodicFn, p2: PeriodicFn) -> PeriodicFn:
    """g(y) = integral P1(x + y) P2(x) dx on the standard grid (even for even inputs)."""
    if p1.n != p2.n:
        raise ValueError("functions must share a grid")
    lagged = _circular_xcorr(p1.samples, p2.samples, p1.h)
    return PeriodicFn(np.roll(lagged, p1.n // 2))
