"""Periodic fields on the torus [0, 2*pi)^2 and their spectral calculus.

Fields store real physical samples, row-major with the y index outer and the
x index inner, so ``values[j, i]`` is the sample at ``(x_i, y_j)``.  Fourier
coefficients are produced on demand with a real FFT and never stored.

All spectral operators below use the "derivative" wavenumbers, in which the
Nyquist row/column is zeroed; this keeps odd derivatives real and makes
``divergence(leray_project(v))`` vanish to roundoff.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi


def _workers() -> int:
    value = os.environ.get("MHD2D_THREADS")
    if not value:
        return 1
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def rfft2(a: np.ndarray) -> np.ndarray:
    """Forward real FFT over the last two axes, normalised to mode amplitudes."""
    return sfft.rfft2(a, norm="forward", workers=_workers())


def irfft2(a_hat: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(a_hat, s=(n, n), norm="forward", workers=_workers())


@dataclass(frozen=True)
class Grid:
    """Uniform n x n grid on the 2*pi-periodic torus."""

    n: int

    def __post_init__(self):
        n = self.n
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise TypeError(f"grid size must be an integer, got {n!r}")
        if n < 16 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 16, got {n}")
        object.__setattr__(self, "n", int(n))

    @property
    def length(self) -> float:
        return TWO_PI

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return meshgrid arrays ``(X, Y)`` shaped ``(n, n)``."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, indexing="xy")

    @property
    def spectral(self) -> "Spectral":
        return _spectral(self.n)


class Spectral:
    """Wavenumber tables for the rfft2 layout of an n x n grid (cached per n)."""

    def __init__(self, n: int):
        self.n = n
        kx = np.fft.rfftfreq(n, 1.0 / n)
        ky = np.fft.fftfreq(n, 1.0 / n)
        self.kx = kx[None, :]
        self.ky = ky[:, None]
        # true lattice magnitude, used by the Bessel-potential norms
        self.k2_full = self.kx**2 + self.ky**2
        kdx = np.where(np.abs(kx) == n // 2, 0.0, kx)
        kdy = np.where(np.abs(ky) == n // 2, 0.0, ky)
        self.kdx = kdx[None, :] + 0.0 * self.ky
        self.kdy = kdy[:, None] + 0.0 * self.kx
        self.ikx = 1j * self.kdx
        self.iky = 1j * self.kdy
        self.k2 = self.kdx**2 + self.kdy**2
        nonzero = self.k2 > 0
        self.inv_k2 = np.zeros_like(self.k2)
        self.inv_k2[nonzero] = 1.0 / self.k2[nonzero]
        kmax = n // 3
        self.dealias = (np.abs(self.kx) <= kmax) & (np.abs(self.ky) <= kmax)
        # rfft stores only kx >= 0; interior columns stand for a conjugate pair
        w = np.full(self.kx.shape, 2.0)
        w[0, 0] = 1.0
        if n % 2 == 0:
            w[0, -1] = 1.0
        self.parseval_weights = w + 0.0 * self.ky

    def power(self, f_hat: np.ndarray) -> np.ndarray:
        """Per-mode contribution to sum |c_k|^2 over the full lattice."""
        return self.parseval_weights * (f_hat.real**2 + f_hat.imag**2)


@lru_cache(maxsize=16)
def _spectral(n: int) -> Spectral:
    return Spectral(n)


class ScalarField:
    """Real periodic samples on a :class:`Grid`. Values are read-only."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=float)
        if arr.shape != (grid.n, grid.n):
            raise ValueError(f"expected shape {(grid.n, grid.n)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("ScalarField is immutable")

    @classmethod
    def from_function(cls, grid: Grid, func) -> "ScalarField":
        X, Y = grid.coordinates()
        return cls(grid, np.broadcast_to(func(X, Y), (grid.n, grid.n)))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full((grid.n, grid.n), float(c)))

    def spectrum(self) -> np.ndarray:
        return rfft2(self.values)

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __repr__(self):
        return f"ScalarField(n={self.grid.n})"


class VectorField2:
    """Pair of scalar fields sharing one grid."""

    __slots__ = ("x", "y")

    def __init__(self, x: ScalarField, y: ScalarField):
        if x.grid != y.grid:
            raise ValueError("vector components must share one grid")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __setattr__(self, name, value):
        raise AttributeError("VectorField2 is immutable")

    @classmethod
    def from_arrays(cls, grid: Grid, vx, vy) -> "VectorField2":
        return cls(ScalarField(grid, vx), ScalarField(grid, vy))

    @classmethod
    def from_function(cls, grid: Grid, func) -> "VectorField2":
        X, Y = grid.coordinates()
        vx, vy = func(X, Y)
        shape = (grid.n, grid.n)
        return cls.from_arrays(grid, np.broadcast_to(vx, shape), np.broadcast_to(vy, shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField2":
        z = np.zeros((grid.n, grid.n))
        return cls.from_arrays(grid, z, z)

    @property
    def grid(self) -> Grid:
        return self.x.grid

    def stack(self) -> np.ndarray:
        """Components as a ``(2, n, n)`` array (a fresh copy)."""
        return np.stack([self.x.values, self.y.values])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x.values, self.y.values)

    def __add__(self, other: "VectorField2"):
        return VectorField2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "VectorField2"):
        return VectorField2(self.x - other.x, self.y - other.y)

    def __mul__(self, c):
        return VectorField2(self.x * c, self.y * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"VectorField2(n={self.grid.n})"


Field = Union[ScalarField, VectorField2]


def _vals(other):
    return other.values if isinstance(other, ScalarField) else other


def _components(f: Field) -> list[np.ndarray]:
    if isinstance(f, VectorField2):
        return [f.x.values, f.y.values]
    if isinstance(f, ScalarField):
        return [f.values]
    raise TypeError(f"expected ScalarField or VectorField2, got {type(f).__name__}")


# ---------------------------------------------------------------- calculus


def gradient(f: ScalarField) -> VectorField2:
    sp = f.grid.spectral
    f_hat = f.spectrum()
    n = f.grid.n
    return VectorField2.from_arrays(
        f.grid, irfft2(sp.ikx * f_hat, n), irfft2(sp.iky * f_hat, n)
    )


def divergence(v: VectorField2) -> ScalarField:
    sp = v.grid.spectral
    d_hat = sp.ikx * v.x.spectrum() + sp.iky * v.y.spectrum()
    return ScalarField(v.grid, irfft2(d_hat, v.grid.n))


def scalar_curl(v: VectorField2) -> ScalarField:
    """2D curl ``d(v_y)/dx - d(v_x)/dy``."""
    sp = v.grid.spectral
    c_hat = sp.ikx * v.y.spectrum() - sp.iky * v.x.spectrum()
    return ScalarField(v.grid, irfft2(c_hat, v.grid.n))


def laplacian(f: ScalarField) -> ScalarField:
    sp = f.grid.spectral
    return ScalarField(f.grid, irfft2(-sp.k2 * f.spectrum(), f.grid.n))


def project_hat(vx_hat: np.ndarray, vy_hat: np.ndarray, sp: Spectral):
    """Leray projection ``I - k k^T/|k|^2`` on coefficient arrays."""
    kdotv = (sp.kdx * vx_hat + sp.kdy * vy_hat) * sp.inv_k2
    return vx_hat - sp.kdx * kdotv, vy_hat - sp.kdy * kdotv


def leray_project(v: VectorField2) -> VectorField2:
    """Divergence-free part of ``v``; mean modes pass through unchanged."""
    sp = v.grid.spectral
    px, py = project_hat(v.x.spectrum(), v.y.spectrum(), sp)
    n = v.grid.n
    return VectorField2.from_arrays(v.grid, irfft2(px, n), irfft2(py, n))


def helmholtz_potential(v: VectorField2) -> ScalarField:
    """Zero-mean ``phi`` with ``v - grad(phi)`` divergence-free."""
    sp = v.grid.spectral
    # div v = lap phi  ->  phi_hat = -i k.v_hat / |k|^2
    div_hat = sp.ikx * v.x.spectrum() + sp.iky * v.y.spectrum()
    return ScalarField(v.grid, irfft2(-div_hat * sp.inv_k2, v.grid.n))


def dealias(f: Field) -> Field:
    """Zero every mode outside the two-thirds band."""
    mask = f.grid.spectral.dealias
    n = f.grid.n
    if isinstance(f, VectorField2):
        return VectorField2(dealias(f.x), dealias(f.y))
    return ScalarField(f.grid, irfft2(mask * f.spectrum(), n))


# ------------------------------------------------------------------- norms


def integrate(values: np.ndarray, grid: Grid) -> float:
    """Equal-weight quadrature of samples over the torus."""
    return float(values.sum() * grid.cell_area)


def _check_p(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValueError(f"Lebesgue exponent must be >= 1 or inf, got {p}")
    return p


def _lp_of(mag: np.ndarray, p: float, grid: Grid) -> float:
    if math.isinf(p):
        return float(np.max(mag)) if mag.size else 0.0
    if p == 2.0:
        return math.sqrt(integrate(mag * mag, grid))
    if p == 1.0:
        return integrate(mag, grid)
    peak = float(np.max(mag))
    if peak == 0.0:
        return 0.0
    # scale first so |f|^p cannot overflow for large p
    return peak * integrate((mag / peak) ** p, grid) ** (1.0 / p)


def _magnitude(comps: list[np.ndarray]) -> np.ndarray:
    if len(comps) == 1:
        return np.abs(comps[0])
    return np.hypot(comps[0], comps[1])


def norm_lp(f: Field, p: float) -> float:
    """L^p norm by equal-weight quadrature; ``p = inf`` is the grid maximum.

    Vector fields use the pointwise Euclidean magnitude.
    """
    p = _check_p(p)
    return _lp_of(_magnitude(_components(f)), p, f.grid)


def _multi_indices(k: int):
    # weights C(k,|a|) |a|!/(a1! a2!) make the q = 2 case equal the H^k norm
    for order in range(k + 1):
        for a in range(order, -1, -1):
            b = order - a
            weight = math.comb(k, order) * math.comb(order, a)
            yield a, b, weight


def norm_sobolev(f: Field, k: int, q: float) -> float:
    """W^{k,q} norm ``(sum_a w_a ||d^a f||_q^q)^(1/q)`` over |a| <= k.

    The multinomial weights ``w_a`` make q = 2 coincide with :func:`norm_hs`
    at integer order; for k <= 1 every weight is one.
    """
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise ValueError(f"derivative order must be a nonnegative integer, got {k}")
    k = int(k)
    if k > 3:
        raise ValueError(f"derivative order {k} > 3 is not supported")
    q = _check_p(q)
    grid = f.grid
    sp = grid.spectral
    hats = [rfft2(c) for c in _components(f)]
    terms = []
    for a, b, weight in _multi_indices(k):
        mult = sp.ikx**a * sp.iky**b
        comps = [irfft2(mult * h, grid.n) for h in hats]
        terms.append((weight, _lp_of(_magnitude(comps), q, grid)))
    if math.isinf(q):
        return max(t for _, t in terms)
    peak = max(t for _, t in terms)
    if peak == 0.0:
        return 0.0
    return peak * sum(w * (t / peak) ** q for w, t in terms) ** (1.0 / q)


def grad_norm_l2(f: Field) -> float:
    """``||grad f||_{L^2}`` (all components), evaluated by Parseval."""
    sp = f.grid.spectral
    total = sum(float(np.sum(sp.k2 * sp.power(rfft2(c)))) for c in _components(f))
    return TWO_PI * math.sqrt(total)


def norm_hs(f: Field, s: float) -> float:
    """Bessel-potential norm ``(sum_k (1+|k|^2)^s |f_k|^2)^(1/2)``.

    Coefficients are normalised so that ``s = 0`` reproduces the L^2
    quadrature norm (Parseval).
    """
    if s < 0:
        raise ValueError(f"smoothness index must be >= 0, got {s}")
    sp = f.grid.spectral
    weight = (1.0 + sp.k2_full) ** s
    total = 0.0
    for c in _components(f):
        total += float(np.sum(weight * sp.power(rfft2(c))))
    return TWO_PI * math.sqrt(total)
