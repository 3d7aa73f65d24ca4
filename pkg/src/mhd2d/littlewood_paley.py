"""Dyadic frequency decomposition on the periodic lattice.

The partition is the usual radial one: a smooth cutoff ``chi`` equal to one on
``|xi| <= 1`` and vanishing for ``|xi| >= 4/3``, and ``phi(xi) = chi(xi/2) -
chi(xi)`` supported in ``1 <= |xi| <= 8/3``.  Band operators are applied as
Fourier multipliers on the integer lattice, so

    S_{q+1} - S_q = Delta_q        (telescoping, exact)

and ``S_{q_min+1} + sum_{q_min < q <= q_max} Delta_q`` is the identity once
``2**q_max`` reaches the Nyquist wavenumber.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fields import (
    Field,
    Grid,
    grad_norm_l2,
    ScalarField,
    VectorField2,
    irfft2,
    norm_hs,
    norm_lp,
    norm_sobolev,
)


class ZeroBandError(ValueError):
    """A ratio was requested for a band (or field) that vanishes."""


def smooth_ramp(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone in between."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        s = 1.0 - t
        b = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    return a / (a + b)


def chi_profile(r):
    """Radial low-pass profile: 1 on [0, 1], 0 beyond 4/3."""
    return 1.0 - smooth_ramp(3.0 * (np.asarray(r, dtype=float) - 1.0))


def phi_profile(r):
    """Radial ring profile, supported in [1, 8/3]."""
    r = np.asarray(r, dtype=float)
    return chi_profile(r / 2.0) - chi_profile(r)


@dataclass(frozen=True)
class DyadicPartition:
    """Samples of the partition on the rfft lattice of ``grid``.

    ``chi`` holds the low-pass multiplier ``chi(2**-(q_min+1) xi)``;
    ``phi[q]`` holds ``phi(2**-q xi)`` for ``q_min < q <= q_max``.
    """

    grid: Grid
    q_min: int
    q_max: int
    chi: np.ndarray = field(repr=False)
    phi: dict = field(repr=False)

    @property
    def band_indices(self) -> range:
        return range(self.q_min + 1, self.q_max + 1)

    def lattice_magnitude(self) -> np.ndarray:
        return np.sqrt(self.grid.spectral.k2_full)

    def unity_defect(self) -> float:
        """Max of |chi + sum phi_q - 1| over every lattice frequency."""
        total = self.chi.copy()
        for q in self.band_indices:
            total = total + self.phi[q]
        return float(np.max(np.abs(total - 1.0)))


def build_partition(grid: Grid, q_min: int, q_max: int) -> DyadicPartition:
    q_min, q_max = int(q_min), int(q_max)
    if q_min >= q_max:
        raise ValueError(f"need q_min < q_max, got {q_min}, {q_max}")
    if 2.0**q_max < grid.n / 2:
        raise ValueError(
            f"2**q_max = {2.0**q_max:g} does not reach the Nyquist wavenumber {grid.n // 2}"
        )
    kmag = np.sqrt(grid.spectral.k2_full)
    chi = chi_profile(kmag * 2.0 ** -(q_min + 1))
    phi = {q: phi_profile(kmag * 2.0**-q) for q in range(q_min + 1, q_max + 1)}
    for arr in (chi, *phi.values()):
        arr.flags.writeable = False
    return DyadicPartition(grid, q_min, q_max, chi, phi)


def _apply(f: ScalarField, mult: np.ndarray) -> ScalarField:
    return ScalarField(f.grid, irfft2(mult * f.spectrum(), f.grid.n))


def delta_q(f: ScalarField, part: DyadicPartition, q: int) -> ScalarField:
    if q not in part.phi:
        raise ValueError(f"band {q} outside ({part.q_min}, {part.q_max}]")
    return _apply(f, part.phi[q])


def s_q(f: ScalarField, part: DyadicPartition, q: int) -> ScalarField:
    """Low-pass ``S_q f`` with multiplier ``chi(2**-q xi)``."""
    if not part.q_min <= q <= part.q_max + 1:
        raise ValueError(f"S_{q} outside [{part.q_min}, {part.q_max + 1}]")
    return _apply(f, chi_profile(part.lattice_magnitude() * 2.0**-q))


@dataclass(frozen=True)
class BandDecomposition:
    low: ScalarField
    bands: list

    def reconstruct(self) -> ScalarField:
        total = self.low.values.copy()
        for _, band in self.bands:
            total += band.values
        return ScalarField(self.low.grid, total)


def decompose(f: ScalarField, part: DyadicPartition) -> BandDecomposition:
    low = _apply(f, part.chi)
    f_hat = f.spectrum()
    n = f.grid.n
    bands = [(q, ScalarField(f.grid, irfft2(part.phi[q] * f_hat, n))) for q in part.band_indices]
    return BandDecomposition(low, bands)


def three_part_split(f: ScalarField, part: DyadicPartition, N: int):
    """Split ``f = S_{-N-1} f + sum_{|j|<=N} Delta_j f + sum_{j>N} Delta_j f``."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if -N < part.q_min + 1 or N > part.q_max:
        raise ValueError(
            f"bands [-{N}, {N}] not available in ({part.q_min}, {part.q_max}]"
        )
    f_hat = f.spectrum()
    kmag = part.lattice_magnitude()
    n = f.grid.n
    low = chi_profile(kmag * 2.0 ** (N + 1))
    mid = sum(part.phi[j] for j in range(-N, N + 1))
    high = sum((part.phi[j] for j in range(N + 1, part.q_max + 1)), np.zeros_like(low))
    return tuple(ScalarField(f.grid, irfft2(m * f_hat, n)) for m in (low, mid, high))


def kappa(q: float) -> float:
    if not q > 2:
        raise ValueError(f"kappa needs q > 2, got {q}")
    return min(2.0 / q, 2.0 * (0.5 - 1.0 / q))


def optimal_band_count(w1q_norm: float, grad_l2_norm: float, q: float) -> int:
    """Band count ``floor(log_{2^kappa}(w1q / grad)) + 1``, at least 1."""
    if not (w1q_norm > 0 and grad_l2_norm > 0):
        raise ValueError("norms must be positive")
    x = math.log(w1q_norm / grad_l2_norm) / (kappa(q) * math.log(2.0))
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        x = nearest
    return max(1, math.floor(x) + 1)


def _is_zero(part_values: np.ndarray, reference: np.ndarray) -> bool:
    scale = float(np.max(np.abs(reference)))
    return float(np.max(np.abs(part_values))) <= 1e-12 * scale or scale == 0.0


def bernstein_ratio(f: ScalarField, part: DyadicPartition, q: int, p: float) -> float:
    band = delta_q(f, part, q)
    if _is_zero(band.values, f.values):
        raise ZeroBandError(f"band {q} of the field is zero")
    return norm_lp(band, math.inf) / (2.0 ** (2.0 * q / p) * norm_lp(band, p))


def ln_plus(x: float) -> float:
    return max(math.log(x), 0.0) if x > 0 else 0.0


def log_sobolev_ratio(f: Field, q: float) -> float:
    """``||f||_inf / (1 + ||grad f||_2 * sqrt(ln+ ||f||_{W^{1,q}}))``."""
    kappa(q)
    if max(float(np.max(np.abs(c))) for c in _arrays(f)) == 0.0:
        raise ZeroBandError("log-Sobolev ratio of the zero field is undefined")
    grad_l2 = grad_norm_l2(f)
    denom = 1.0 + grad_l2 * math.sqrt(ln_plus(norm_sobolev(f, 1, q)))
    return norm_lp(f, math.inf) / denom


def _arrays(f: Field):
    if isinstance(f, VectorField2):
        return [f.x.values, f.y.values]
    return [f.values]


def window_integral(times: Sequence[float], values: Sequence[float], s: float, t: float) -> float:
    """Integral over [s, t] of the piecewise-linear interpolant of ``values``.

    On stamp-aligned windows this is the trapezoid rule; it is exactly
    additive under window splitting.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if not s < t:
        raise ValueError(f"empty time window [{s}, {t}]")
    slack = 1e-12 * max(1.0, abs(times[-1]))
    if s < times[0] - slack or t > times[-1] + slack:
        raise ValueError(f"window [{s}, {t}] not covered by [{times[0]}, {times[-1]}]")
    inside = (times > s) & (times < t)
    ts = np.concatenate([[s], times[inside], [t]])
    vs = np.concatenate([[np.interp(s, times, values)], values[inside], [np.interp(t, times, values)]])
    return float(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)))


def time_l2_norm(series, s: float, t: float, norm) -> float:
    """``||f||_{L^2(s,t;X)}`` for a stamped series and a spatial norm callable."""
    times = [tau for tau, _ in series]
    sq = [norm(f) ** 2 for _, f in series]
    return math.sqrt(window_integral(times, sq, s, t))


def time_integrated_ratio(series, s: float, t: float, q: float) -> float:
    """Time-integrated log-Sobolev ratio over the window [s, t].

    ``series`` is a sequence of ``(time, field)`` pairs in increasing time.
    """
    kappa(q)
    if not series:
        raise ValueError("empty series")
    linf = time_l2_norm(series, s, t, lambda f: norm_lp(f, math.inf))
    h1 = time_l2_norm(series, s, t, lambda f: norm_hs(f, 1))
    w1q = time_l2_norm(series, s, t, lambda f: norm_sobolev(f, 1, q))
    return linf / (1.0 + h1 * math.sqrt(ln_plus(w1q)))
