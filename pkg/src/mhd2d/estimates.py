"""Functionals, identities and regularity probes evaluated on trajectories.

Time derivatives come from the snapshot stencil in :mod:`mhd2d.series`
(centered inside, second-order one-sided at the ends).  Time integrals are
trapezoid sums on the snapshot grid.  The sup of ``||sqrt(rho) u_t||`` skips
the two end snapshots, where the one-sided stencil is least accurate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import (
    VectorField2,
    irfft2,
    norm_hs,
    norm_lp,
    norm_sobolev,
    project_hat,
    rfft2,
)
from .littlewood_paley import window_integral
from .series import EstimateSeries, Trajectory

_TIME_SLACK = 1e-9


class EstimateError(ValueError):
    """A functional was requested outside its domain."""


@dataclass(frozen=True)
class IdentityDefect:
    """Both sides of an identity over time, with per-time scale."""

    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    scale: np.ndarray

    @property
    def defect(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def relative(self) -> np.ndarray:
        return self.defect / self.scale

    @property
    def max_relative(self) -> float:
        return float(np.max(self.relative)) if len(self.t) else 0.0


def _cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y, dtype=float)
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _check_time(traj: Trajectory, T: float) -> np.ndarray:
    times = traj.times
    slack = _TIME_SLACK * max(1.0, abs(times[-1]))
    if T < times[0] - slack or T > times[-1] + slack:
        raise EstimateError(f"time {T} outside [{times[0]}, {times[-1]}]")
    return times


def _need_snapshots(traj, k: int = 3):
    if len(traj) < k:
        raise EstimateError(f"need at least {k} snapshots, got {len(traj)}")


def _columns(source) -> dict:
    if isinstance(source, Trajectory):
        return source.profile
    if isinstance(source, EstimateSeries):
        return source.columns
    raise TypeError("expected a Trajectory or an EstimateSeries")


# ------------------------------------------------------------------ energy


def energy_report(traj: Trajectory) -> dict:
    """Columns ``t, e_kin, e_mag, diss_u, diss_B`` per snapshot."""
    p = traj.profile
    return {k: p[k].copy() for k in ("t", "e_kin", "e_mag", "diss_u", "diss_B")}


def energy_identity_defect(source) -> IdentityDefect:
    """``E(t) - E(0)`` against ``-int_0^t (diss_u + diss_B)``.

    ``source`` is a trajectory or a per-step series.  The scale is ``E(0)``,
    so :attr:`IdentityDefect.relative` is the defect as a fraction of the
    initial energy.
    """
    _need_snapshots(source)
    p = _columns(source)
    t = p["t"]
    E = p["e_kin"] + p["e_mag"]
    lhs = E - E[0]
    rhs = -_cumtrapz(t, p["diss_u"] + p["diss_B"])
    scale = np.full_like(t, E[0] if E[0] > 0 else 1.0)
    return IdentityDefect(t, lhs, rhs, scale)


@dataclass(frozen=True)
class DensityBounds:
    passed: bool
    worst_excursion: float
    max_decay_percent: float


def density_max_principle(source) -> DensityBounds:
    """One-sided bound check on a trajectory or a per-step series.

    Passes iff ``rho_max`` never increases and ``rho_min`` never decreases
    from one sample to the next (zero tolerance).
    """
    cols = _columns(source)
    hi = np.asarray(cols["rho_max"])
    lo = np.asarray(cols["rho_min"])
    if len(hi) == 0:
        return DensityBounds(True, 0.0, 0.0)
    rise = np.max(np.diff(hi), initial=0.0)
    drop = np.max(-np.diff(lo), initial=0.0)
    worst = max(rise, drop, 0.0)
    decay = 100.0 * (hi[0] - hi[-1]) / hi[0] if hi[0] > 0 else 0.0
    return DensityBounds(worst == 0.0, float(worst), float(decay))


# ------------------------------------------------------------ functionals


def _upto(times: np.ndarray, T: float) -> np.ndarray:
    return times <= T + _TIME_SLACK * max(1.0, abs(times[-1]))


def _integral(times, values, T) -> float:
    if T <= times[0]:
        return 0.0
    return window_integral(times, values, float(times[0]), min(T, float(times[-1])))


def phi(traj: Trajectory, T: float) -> float:
    """Blow-up functional: sup of H^2 norms, sup of the weighted u_t norm and
    time integrals of the H^3 and time-derivative H^1 norms up to ``T``."""
    times = _check_time(traj, T)
    p = traj.profile
    keep = _upto(times, T)
    sup_h2 = float(np.max((p["rho_H2"] + p["u_H2"] ** 2 + p["B_H2"] ** 2)[keep]))
    interior = keep.copy()
    interior[0] = interior[-1] = False
    sup_ut = float(np.max(p["sqrt_rho_ut_L2"][interior])) if interior.any() else 0.0
    h3 = _integral(times, p["u_H3"] ** 2 + p["B_H3"] ** 2, T)
    dt_h1 = _integral(times, p["ut_H1"] + p["Bt_H1"], T)
    return sup_h2 + sup_ut + h3 + dt_h1


def psi_series(traj: Trajectory) -> np.ndarray:
    """``Psi`` at every snapshot time."""
    p = traj.profile
    t = p["t"]
    running = np.maximum.accumulate(p["u_H1"] ** 2 + p["B_H1"] ** 2)
    return math.e + running + _cumtrapz(t, p["sqrt_rho_ut_L2"] + p["Bt_L2"])


def psi(traj: Trajectory, t: float) -> float:
    """``e + sup_{tau<=t}(||u||_{H1}^2 + ||B||_{H1}^2) + int_0^t (||sqrt(rho) u_t||^2 + ||B_t||^2)``."""
    times = _check_time(traj, t)
    p = traj.profile
    keep = _upto(times, t)
    sup = float(np.max((p["u_H1"] ** 2 + p["B_H1"] ** 2)[keep]))
    return math.e + sup + _integral(times, p["sqrt_rho_ut_L2"] + p["Bt_L2"], t)


def serrin_integral(traj: Trajectory, r: float, s: float) -> float:
    """``int_0^T ||u||_{L^r}^s dt`` over the whole trajectory, with ``2/s + 2/r = 1``."""
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    if not (s > 0 and r >= 2) or abs(2.0 / s + 2.0 * inv_r - 1.0) > 1e-12:
        raise EstimateError(f"exponents (r={r}, s={s}) violate 2/s + 2/r = 1")
    vals = np.array([norm_lp(st.u, r) ** s for st in traj.states])
    return float(_cumtrapz(traj.times, vals)[-1])


# ---------------------------------------------------- first-level identities


def _grad_dot(a: np.ndarray, b_hat: np.ndarray, sp, n: int) -> np.ndarray:
    """``(a . grad) b`` on the grid for vector ``a`` (physical) and ``b`` (coefficients)."""
    return a[0] * irfft2(sp.ikx * b_hat, n) + a[1] * irfft2(sp.iky * b_hat, n)


def first_level_identity_defect(traj: Trajectory) -> tuple[IdentityDefect, IdentityDefect]:
    """Momentum and induction identities tested against the time derivatives.

    Momentum: ``1/2 d/dt ||grad u||^2 + ||sqrt(rho) u_t||^2`` against
    ``-int rho (u.grad u).u_t + int (B.grad B).u_t``.  Induction:
    ``1/2 d/dt ||grad B||^2 + ||B_t||^2`` against
    ``-int (u.grad B).B_t + int (B.grad u).B_t``.  Evaluated at interior
    snapshots.  The scale is the largest of one and the summed magnitudes of
    the terms on either side; both sides vanish identically on simple flows.
    """
    _need_snapshots(traj)
    grid = traj.states[0].grid
    sp = grid.spectral
    n = grid.n
    dA = grid.cell_area
    dt = traj.dt_snapshot
    p = traj.profile
    du = p["diss_u"]
    dB = p["diss_B"]
    count = len(traj)
    rows_u, rows_B = [], []
    for i in range(1, count - 1):
        st = traj.states[i]
        rho = st.rho.values
        u = st.u.stack()
        B = st.B.stack()
        u_hat = rfft2(u)
        B_hat = rfft2(B)
        ut, Bt = traj.time_derivatives(i)
        ut = ut.stack()
        Bt = Bt.stack()
        ddu = 0.5 * (du[i + 1] - du[i - 1]) / (2 * dt)
        ddB = 0.5 * (dB[i + 1] - dB[i - 1]) / (2 * dt)
        kin = float(np.sum(np.maximum(rho, 0.0) * (ut**2).sum(0))) * dA
        mag = float(np.sum((Bt**2).sum(0))) * dA
        conv = -float(np.sum(rho * (_grad_dot(u, u_hat, sp, n) * ut).sum(0))) * dA
        lor = float(np.sum((_grad_dot(B, B_hat, sp, n) * ut).sum(0))) * dA
        trans = -float(np.sum((_grad_dot(u, B_hat, sp, n) * Bt).sum(0))) * dA
        stretch = float(np.sum((_grad_dot(B, u_hat, sp, n) * Bt).sum(0))) * dA
        rows_u.append((st.t, ddu + kin, conv + lor, max(1.0, abs(ddu) + kin, abs(conv) + abs(lor))))
        rows_B.append((st.t, ddB + mag, trans + stretch, max(1.0, abs(ddB) + mag, abs(trans) + abs(stretch))))
    return _defect(rows_u), _defect(rows_B)


def _defect(rows) -> IdentityDefect:
    a = np.array(rows, dtype=float).reshape(-1, 4)
    return IdentityDefect(a[:, 0], a[:, 1], a[:, 2], a[:, 3])


# ---------------------------------------------------------------- Gronwall


@dataclass(frozen=True)
class GronwallFit:
    t: np.ndarray
    psi: np.ndarray
    envelope: np.ndarray
    c_fit: float


def gronwall_envelope(traj: Trajectory, s: float) -> GronwallFit:
    """Fit ``Psi(T) <= Psi(s) exp(C int_s^T (||u||_inf^2 + ||B||_inf^2))``.

    ``C`` is the smallest nonnegative constant for which the envelope
    dominates ``Psi`` at every snapshot after ``s``.
    """
    times = _check_time(traj, s)
    p = traj.profile
    ps = psi_series(traj)
    start = int(np.searchsorted(times, s - _TIME_SLACK * max(1.0, abs(times[-1]))))
    t = times[start:]
    psi_t = ps[start:]
    integ = _cumtrapz(t, (p["u_Linf"] ** 2 + p["B_Linf"] ** 2)[start:])
    c = 0.0
    for k in range(1, len(t)):
        if integ[k] > 0 and psi_t[k] > psi_t[0]:
            c = max(c, math.log(psi_t[k] / psi_t[0]) / integ[k])
    return GronwallFit(t, psi_t, psi_t[0] * np.exp(c * integ), c)


# --------------------------------------------------------- regularity probes


def _check_q(q: float):
    if not 1.0 < q < math.inf:
        raise EstimateError(f"need 1 < q < inf, got {q}")


def stokes_solve(F: VectorField2) -> VectorField2:
    """Zero-mean solution of ``-lap u + grad P = F``, ``div u = 0``."""
    sp = F.grid.spectral
    n = F.grid.n
    F_hat = rfft2(F.stack())
    px, py = project_hat(F_hat[0], F_hat[1], sp)
    u = irfft2(np.stack([px, py]) * sp.inv_k2, n)
    return VectorField2.from_arrays(F.grid, u[0], u[1])


def stokes_regularity_probe(F: VectorField2, q: float) -> float:
    """``||u||_{W^{2,q}} / (||F||_{L^q} + ||u||_{H^1})`` for the Stokes solution."""
    _check_q(q)
    if float(np.max(F.magnitude())) == 0.0:
        raise EstimateError("zero forcing")
    u = stokes_solve(F)
    return norm_sobolev(u, 2, q) / (norm_lp(F, q) + norm_hs(u, 1))


def poisson_solve(G: VectorField2) -> VectorField2:
    sp = G.grid.spectral
    B = irfft2(-rfft2(G.stack()) * sp.inv_k2, G.grid.n)
    return VectorField2.from_arrays(G.grid, B[0], B[1])


def poisson_regularity_probe(G: VectorField2, q: float) -> float:
    """``||B||_{W^{2,q}} / (||G||_{L^q} + ||B||_{H^1})`` for ``lap B = G``."""
    _check_q(q)
    peak = float(np.max(G.magnitude()))
    if peak == 0.0:
        raise EstimateError("zero forcing")
    means = (abs(G.x.mean()), abs(G.y.mean()))
    if max(means) > 1e-12 * peak:
        raise EstimateError("forcing has nonzero mean; no periodic solution")
    B = poisson_solve(G)
    return norm_sobolev(B, 2, q) / (norm_lp(G, q) + norm_hs(B, 1))


def random_forcing(grid, rng: np.random.Generator, kmax: float = 8.0) -> VectorField2:
    """Zero-mean random vector field with modes ``0 < |k| <= kmax``."""
    sp = grid.spectral
    keep = (sp.k2_full > 0) & (sp.k2_full <= kmax**2)
    comps = []
    for _ in range(2):
        c = rng.standard_normal(sp.k2.shape) + 1j * rng.standard_normal(sp.k2.shape)
        comps.append(irfft2(np.where(keep, c, 0.0), grid.n))
    return VectorField2.from_arrays(grid, comps[0], comps[1])


__all__ = [
    "EstimateError",
    "IdentityDefect",
    "DensityBounds",
    "GronwallFit",
    "energy_report",
    "energy_identity_defect",
    "density_max_principle",
    "phi",
    "psi",
    "psi_series",
    "serrin_integral",
    "first_level_identity_defect",
    "gronwall_envelope",
    "stokes_solve",
    "stokes_regularity_probe",
    "poisson_solve",
    "poisson_regularity_probe",
    "random_forcing",
]
