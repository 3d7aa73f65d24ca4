"""Time integration of the nonhomogeneous incompressible MHD system.

The equations advanced are

    rho_t + u . grad rho = 0
    rho u_t - lap u + rho (u . grad) u - (B . grad) B + grad P = 0
    B_t - lap B + (u . grad) B - (B . grad) u = 0
    div u = div B = 0

on the 2*pi-periodic torus with unit viscosity and resistivity.  One step is a
first-order splitting: semi-Lagrangian density transport, a semi-implicit
momentum update, a variable-density pressure projection and an induction
update with exact diffusion.  Velocity and magnetic fields live in the
two-thirds dealiased band; density is kept as physical samples.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .fields import (
    Grid,
    ScalarField,
    Spectral,
    VectorField2,
    irfft2,
    project_hat,
    rfft2,
)
from .littlewood_paley import smooth_ramp
from .state import InvariantError, State

if TYPE_CHECKING:
    from .series import EstimateSeries, Trajectory

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """The time integration cannot continue."""


class ConvergenceError(SolverError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class CFLWarning(UserWarning):
    """dt exceeds four times the advisory CFL step."""


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    eps_rel: float = 1e-6
    cfl: float = 0.5
    dealias: bool = True
    picard_tol: float = 1e-10
    picard_max: int = 500

    def __post_init__(self):
        for name in ("dt", "cfl", "picard_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.eps_rel < 1.0:
            raise ValueError(f"eps_rel must lie in (0, 1), got {self.eps_rel}")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")


def cfl_dt(u: VectorField2, cfl: float = 0.5) -> float:
    """Advisory step ``cfl * spacing / max|u|`` (inf for a fluid at rest)."""
    umax = float(np.max(u.magnitude()))
    return math.inf if umax == 0.0 else cfl * u.grid.spacing / umax


# ------------------------------------------------------------------ Krylov


def _inner(sp: Spectral, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(sp.parseval_weights * (a.real * b.real + a.imag * b.imag)))


@dataclass
class SolveStats:
    iterations: int = 0
    residual: float = 0.0


def pcg(apply_a, apply_m, b, x0, sp: Spectral, tol: float, maxiter: int, what: str):
    """Preconditioned conjugate gradients on rfft coefficient arrays.

    Stops once ``||b - A x|| <= tol * ||b||``; raises :class:`ConvergenceError`
    otherwise.  Returns ``(x, SolveStats)``.
    """
    b_norm = math.sqrt(_inner(sp, b, b))
    if b_norm == 0.0:
        return np.zeros_like(b), SolveStats(0, 0.0)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_a(x) if x0 is not None else b.copy()
    rel = math.sqrt(_inner(sp, r, r)) / b_norm
    if rel <= tol:
        return x, SolveStats(0, rel)
    z = apply_m(r)
    p = z.copy()
    rz = _inner(sp, r, z)
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        alpha = rz / _inner(sp, p, ap)
        x += alpha * p
        r -= alpha * ap
        rel = math.sqrt(_inner(sp, r, r)) / b_norm
        if rel <= tol:
            return x, SolveStats(it, rel)
        z = apply_m(r)
        rz_new = _inner(sp, r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"{what} solve did not converge", rel, maxiter)


# ----------------------------------------------------------- nonlinearities


def _mask(sp: Spectral, cfg: SolverConfig):
    return sp.dealias if cfg.dealias else np.ones(sp.k2.shape, dtype=bool)


def _advective(a_hat: np.ndarray, w: np.ndarray, sp: Spectral, mask, n: int) -> np.ndarray:
    """Dealiased ``(w . grad) a`` for a vector ``a`` given by its coefficients.

    ``w`` holds physical components ``(2, n, n)``.
    """
    dx = irfft2(sp.ikx * a_hat, n)
    dy = irfft2(sp.iky * a_hat, n)
    return mask * rfft2(w[0] * dx + w[1] * dy)


def _check_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise SolverError(f"non-finite values in {what}")


# --------------------------------------------------------------- operations


def _periodic_bilinear(f: np.ndarray, xi: np.ndarray, yj: np.ndarray, clip: bool):
    """Sample ``f`` at fractional index positions with periodic wrap."""
    n = f.shape[0]
    i0 = np.floor(xi)
    j0 = np.floor(yj)
    a = xi - i0
    b = yj - j0
    i0 = i0.astype(np.intp) % n
    j0 = j0.astype(np.intp) % n
    i1 = (i0 + 1) % n
    j1 = (j0 + 1) % n
    f00 = f[j0, i0]
    f10 = f[j0, i1]
    f01 = f[j1, i0]
    f11 = f[j1, i1]
    out = (1 - b) * ((1 - a) * f00 + a * f10) + b * ((1 - a) * f01 + a * f11)
    if clip:
        # rounding in the convex combination must not leave the stencil range
        lo = np.minimum(np.minimum(f00, f10), np.minimum(f01, f11))
        hi = np.maximum(np.maximum(f00, f10), np.maximum(f01, f11))
        out = np.clip(out, lo, hi)
    return out


def advect_density(rho: ScalarField, u: VectorField2, dt: float, cfl: float = 0.5) -> ScalarField:
    """Semi-Lagrangian transport of ``rho`` by ``u`` over one step.

    Characteristics are traced back with the midpoint rule and the density is
    sampled with bilinear interpolation, clipped to the four-point stencil,
    so the result never leaves ``[min rho, max rho]``.  Emits
    :class:`CFLWarning` when ``dt`` exceeds four advisory CFL steps.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid = rho.grid
    n = grid.n
    h = grid.spacing
    ux = u.x.values
    uy = u.y.values
    if dt > 4.0 * cfl_dt(u, cfl):
        warnings.warn(
            f"dt={dt:g} exceeds 4x the CFL step {cfl_dt(u, cfl):.3g}", CFLWarning, stacklevel=2
        )
    jj, ii = np.indices((n, n), dtype=float)
    scale = dt / h
    xm = ii - 0.5 * scale * ux
    ym = jj - 0.5 * scale * uy
    umx = _periodic_bilinear(ux, xm, ym, clip=False)
    umy = _periodic_bilinear(uy, xm, ym, clip=False)
    xd = ii - scale * umx
    yd = jj - scale * umy
    return ScalarField(grid, _periodic_bilinear(rho.values, xd, yd, clip=True))


_MOMENTUM_SHIFT = 0.1


def _implicit_operator(rho: np.ndarray, dt: float, mask, sp: Spectral, n: int):
    """``A = T rho T + dt k^2`` on banded coefficients and its preconditioner.

    The preconditioner is ``S (rho + delta)^-1 S`` with
    ``S = sqrt(c / (c + dt k^2))``: the pointwise inverse follows density
    contrast, ``S`` the viscous part, and ``delta`` bounds it at vacuum.
    """
    scale = max(float(rho.max()), 1e-300)
    delta = _MOMENTUM_SHIFT * scale
    weight = 1.0 / (rho + delta)
    root = mask * np.sqrt((scale + delta) / (scale + delta + dt * sp.k2))

    def apply_a(x):
        return mask * rfft2(rho * irfft2(x, n)) + dt * sp.k2 * x

    def apply_m(r):
        return root * rfft2(weight * irfft2(root * r, n))

    return apply_a, apply_m


class _Workspace:
    """Per-run caches: warm starts and solver statistics."""

    def __init__(self):
        self.floor_cells = 0
        self.pressure_iterations = 0
        self.momentum_iterations = 0


def momentum_step(
    state: State,
    cfg: SolverConfig,
    rho_prev: ScalarField | None = None,
    _ws: _Workspace | None = None,
) -> VectorField2:
    """Provisional velocity from the semi-implicit momentum update.

    ``state.rho`` is the transported density and ``rho_prev`` the density
    before transport (defaults to ``state.rho``).  Solves

        (rho - dt lap) u* = sqrt(rho rho_prev) u
                            - dt (rho (u.grad)u + div(rho u) u / 2) + dt (B.grad)B

    by preconditioned CG.  The time derivative is ``sqrt(rho) d(sqrt(rho) u)/dt``
    and the convective term is in skew form; together they equal
    ``rho (u_t + u.grad u)`` and conserve kinetic energy for any density
    update.  Density multiplies only the increment, so the system stays
    symmetric positive definite where ``rho = 0``.
    """
    grid = state.grid
    n = grid.n
    sp = grid.spectral
    mask = _mask(sp, cfg)
    dt = cfg.dt
    rho = state.rho.values
    rho0 = rho if rho_prev is None else rho_prev.values
    u = state.u.stack()
    B = state.B.stack()
    u_hat = mask * rfft2(u)
    u = irfft2(u_hat, n)
    B_hat = mask * rfft2(B)
    # products stay unmasked until the end so the skew form cancels pointwise
    grad_u = (irfft2(sp.ikx * u_hat, n), irfft2(sp.iky * u_hat, n))
    conv = u[0] * grad_u[0] + u[1] * grad_u[1]
    flux_hat = rfft2(rho * u)
    div_flux = irfft2(sp.ikx * flux_hat[0] + sp.iky * flux_hat[1], n)
    inertia = np.sqrt(rho * rho0) * u - dt * (rho * conv + 0.5 * div_flux * u)
    rhs = mask * rfft2(inertia) + dt * _advective(B_hat, B, sp, mask, n)
    _check_finite(rhs, "momentum right-hand side")

    apply_a, apply_m = _implicit_operator(rho, dt, mask, sp, n)
    sol, stats = pcg(apply_a, apply_m, rhs, u_hat, sp, cfg.picard_tol, cfg.picard_max, "momentum")
    if _ws is not None:
        _ws.momentum_iterations += stats.iterations
    out = irfft2(sol, n)
    _check_finite(out, "provisional velocity")
    return VectorField2.from_arrays(grid, out[0], out[1])


def pressure_project(
    u_star: VectorField2,
    rho: ScalarField,
    cfg: SolverConfig,
    rho_ref: float | None = None,
    _ws: _Workspace | None = None,
):
    """Variable-density projection of the provisional velocity.

    Returns ``(u, P)`` where ``u`` is divergence free and
    ``(rho_eps - dt lap)(u* - u) = dt grad P``, with
    ``rho_eps = max(rho, eps_rel * rho_ref)`` and ``rho_ref`` the initial peak
    density (defaults to ``max rho``).  Equivalently ``u`` is the closest
    divergence-free field to ``u*`` in the norm of the implicit momentum
    operator, which keeps the discrete energy balance exact.  Solved by CG on
    the divergence-free subspace; ``P`` has zero mean.
    """
    grid = u_star.grid
    n = grid.n
    sp = grid.spectral
    mask = _mask(sp, cfg)
    dt = cfg.dt
    ref = float(np.max(rho.values)) if rho_ref is None else float(rho_ref)
    floor = cfg.eps_rel * ref
    rho_eps = np.maximum(rho.values, floor)
    apply_mass, apply_prec = _implicit_operator(rho_eps, dt, mask, sp, n)

    def leray(h):
        return np.stack(project_hat(h[0], h[1], sp))

    us_hat = mask * rfft2(u_star.stack())
    _check_finite(us_hat, "provisional velocity")
    b = leray(apply_mass(us_hat))
    sol, stats = pcg(
        lambda v: leray(apply_mass(v)),
        lambda r: leray(apply_prec(leray(r))),
        b,
        leray(us_hat),
        sp,
        cfg.picard_tol,
        cfg.picard_max,
        "projection",
    )
    if _ws is not None:
        _ws.floor_cells += int(np.count_nonzero(rho.values < floor))
        _ws.pressure_iterations += stats.iterations
    # CG iterates stay in the divergence-free subspace up to roundoff
    sol = leray(sol)
    g = apply_mass(us_hat - sol)
    p_hat = -(sp.ikx * g[0] + sp.iky * g[1]) * sp.inv_k2 / dt
    u = irfft2(sol, n)
    return VectorField2.from_arrays(grid, u[0], u[1]), ScalarField(grid, irfft2(p_hat, n))


def induction_step(state: State, cfg: SolverConfig) -> VectorField2:
    """Advance ``B`` by one step: explicit transport, exact diffusion, projection."""
    grid = state.grid
    n = grid.n
    sp = grid.spectral
    mask = _mask(sp, cfg)
    dt = cfg.dt
    u = state.u.stack()
    B = state.B.stack()
    u_hat = mask * rfft2(u)
    B_hat = rfft2(B)
    stretch = _advective(u_hat, B, sp, mask, n)
    transport = _advective(mask * B_hat, u, sp, mask, n)
    new_hat = np.exp(-dt * sp.k2) * (B_hat + dt * (stretch - transport))
    _check_finite(new_hat, "magnetic field")
    bx, by = project_hat(new_hat[0], new_hat[1], sp)
    return VectorField2.from_arrays(grid, irfft2(bx, n), irfft2(by, n))


def _step(state: State, cfg: SolverConfig, rho_ref: float | None, ws: _Workspace | None) -> State:
    rho = advect_density(state.rho, state.u, cfg.dt, cfg.cfl)
    moved = State(state.t, rho, state.u, state.B)
    u_star = momentum_step(moved, cfg, state.rho, ws)
    u, _ = pressure_project(u_star, rho, cfg, rho_ref, ws)
    B = induction_step(State(state.t, rho, u, state.B), cfg)
    out = State(state.t + cfg.dt, rho, u, B)
    try:
        out.validate()
    except InvariantError as exc:
        raise SolverError(str(exc)) from exc
    return out


def step(state: State, cfg: SolverConfig, rho_ref: float | None = None) -> State:
    """One split step: transport, momentum, projection, induction."""
    return _step(state, cfg, rho_ref, None)


# ---------------------------------------------------------------- scenarios

SCENARIOS = ("taylor_green", "mhd_rest", "vacuum_bubble", "random_smooth")


@dataclass(frozen=True)
class Scenario:
    """Initial-data preset.

    ``velocity_amplitude`` and ``magnetic_amplitude`` default per preset:
    taylor_green (1, 0), mhd_rest (0, 1), vacuum_bubble (0.5, 0.2),
    random_smooth (0.5, 0.3), the random fields being scaled to that peak
    magnitude.
    """

    name: str
    n: int = 64
    seed: int = 0
    velocity_amplitude: float | None = None
    magnetic_amplitude: float | None = None

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}; valid: {', '.join(SCENARIOS)}")
        Grid(self.n)

    def initial_state(self) -> State:
        return _BUILDERS[self.name](self)


_DEFAULT_AMPLITUDES = {
    "taylor_green": (1.0, 0.0),
    "mhd_rest": (0.0, 1.0),
    "vacuum_bubble": (0.5, 0.2),
    "random_smooth": (0.5, 0.3),
}


def _amplitudes(sc: Scenario):
    du, db = _DEFAULT_AMPLITUDES[sc.name]
    ua = du if sc.velocity_amplitude is None else sc.velocity_amplitude
    ba = db if sc.magnetic_amplitude is None else sc.magnetic_amplitude
    return float(ua), float(ba)


def bubble_density(grid: Grid, inner: float = 0.5, width: float = 0.3) -> ScalarField:
    """Zero inside radius ``inner`` about (pi, pi), one beyond ``inner + width``."""
    X, Y = grid.coordinates()
    d = np.hypot(X - math.pi, Y - math.pi)
    return ScalarField(grid, smooth_ramp((d - inner) / width))


def _banded(grid: Grid, vx, vy) -> VectorField2:
    sp = grid.spectral
    n = grid.n
    hat = sp.dealias * rfft2(np.stack([vx, vy]))
    px, py = project_hat(hat[0], hat[1], sp)
    return VectorField2.from_arrays(grid, irfft2(px, n), irfft2(py, n))


def _taylor_green(sc: Scenario) -> State:
    grid = Grid(sc.n)
    ua, ba = _amplitudes(sc)
    X, Y = grid.coordinates()
    u = VectorField2.from_arrays(grid, ua * np.sin(X) * np.cos(Y), -ua * np.cos(X) * np.sin(Y))
    B = VectorField2.from_arrays(grid, ba * np.sin(Y), np.zeros_like(X))
    return State(0.0, ScalarField.constant(grid, 1.0), u, B)


def _mhd_rest(sc: Scenario) -> State:
    grid = Grid(sc.n)
    _, ba = _amplitudes(sc)
    X, Y = grid.coordinates()
    B = VectorField2.from_arrays(grid, ba * np.sin(Y), np.zeros_like(X))
    return State(0.0, bubble_density(grid), VectorField2.zeros(grid), B)


def _vacuum_bubble(sc: Scenario) -> State:
    grid = Grid(sc.n)
    ua, ba = _amplitudes(sc)
    X, Y = grid.coordinates()
    rho = bubble_density(grid)
    u = _banded(grid, rho.values * ua * np.cos(Y), rho.values * ua * np.cos(X))
    B = VectorField2.from_arrays(grid, ba * np.sin(Y), np.zeros_like(X))
    return State(0.0, rho, u, B)


def _random_band(rng: np.random.Generator, grid: Grid, kmax: float = 4.0) -> np.ndarray:
    sp = grid.spectral
    coeff = rng.standard_normal(sp.k2.shape) + 1j * rng.standard_normal(sp.k2.shape)
    keep = (sp.k2_full <= kmax**2) & (sp.k2_full > 0)
    return irfft2(np.where(keep, coeff, 0.0), grid.n)


def _random_smooth(sc: Scenario) -> State:
    grid = Grid(sc.n)
    ua, ba = _amplitudes(sc)
    rng = np.random.default_rng(sc.seed)
    s = _random_band(rng, grid)
    rho = np.maximum(1.0 + 0.5 * s / np.max(np.abs(s)), 0.0)
    fields = []
    for amp in (ua, ba):
        v = _banded(grid, _random_band(rng, grid), _random_band(rng, grid))
        peak = float(np.max(v.magnitude()))
        fields.append(v * (amp / peak) if peak > 0 else v)
    return State(0.0, ScalarField(grid, rho), fields[0], fields[1])


_BUILDERS = {
    "taylor_green": _taylor_green,
    "mhd_rest": _mhd_rest,
    "vacuum_bubble": _vacuum_bubble,
    "random_smooth": _random_smooth,
}


# --------------------------------------------------------------------- run


@dataclass
class RunResult:
    """Outcome of :func:`run`.

    ``trajectory`` holds the snapshot states; ``series`` the per-step
    estimate columns.  On abort ``failed`` is set and both hold what was
    computed before the failure.
    """

    trajectory: Trajectory
    series: EstimateSeries
    final_state: State
    failed: bool = False
    error: str = ""
    steps: int = 0
    floor_activations: int = 0
    cfl_warnings: int = 0
    pressure_iterations: int = 0
    momentum_iterations: int = 0
    extra: dict = field(default_factory=dict)


def step_count(t_end: float, dt: float) -> int:
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    steps = round(t_end / dt)
    if abs(steps * dt - t_end) > 1e-9 * max(t_end, dt):
        raise ValueError(f"t_end={t_end} is not a whole number of steps of dt={dt}")
    return int(steps)


def run(
    scenario: Scenario | State,
    cfg: SolverConfig,
    t_end: float,
    snapshot_every: int = 1,
    on_snapshot=None,
) -> RunResult:
    """Integrate a preset (or a given initial state) up to ``t_end``.

    Snapshots are kept every ``snapshot_every`` steps, starting with the
    initial state.  ``on_snapshot(index, state)`` is called for each one,
    which lets callers stream snapshots to disk.
    """
    from .series import SeriesBuilder, Trajectory

    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    state = scenario.initial_state() if isinstance(scenario, Scenario) else scenario
    steps = step_count(t_end, cfg.dt)
    rho_ref = float(np.max(state.rho.values))
    ws = _Workspace()
    t0 = state.t
    snapshots = [state]
    if on_snapshot is not None:
        on_snapshot(0, state)
    builder = SeriesBuilder(cfg.dt)
    builder.push(state)
    failed, error, done, n_cfl = False, "", 0, 0
    for k in range(1, steps + 1):
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", CFLWarning)
                new = _step(state, cfg, rho_ref, ws)
            n_cfl += sum(issubclass(w.category, CFLWarning) for w in caught)
        except SolverError as exc:
            failed, error = True, str(exc)
            log.error("run aborted at step %d (t=%.6g): %s", k, state.t, exc)
            break
        state = new.with_time(t0 + k * cfg.dt)
        builder.push(state)
        done = k
        if k % snapshot_every == 0:
            snapshots.append(state)
            if on_snapshot is not None:
                on_snapshot(len(snapshots) - 1, state)
    series = builder.finish()
    traj = Trajectory(tuple(snapshots), cfg.dt * snapshot_every)
    return RunResult(
        trajectory=traj,
        series=series,
        final_state=state,
        failed=failed,
        error=error,
        steps=done,
        floor_activations=ws.floor_cells,
        cfl_warnings=n_cfl,
        pressure_iterations=ws.pressure_iterations,
        momentum_iterations=ws.momentum_iterations,
    )


def with_dt(cfg: SolverConfig, dt: float) -> SolverConfig:
    return replace(cfg, dt=dt)


# ----------------------------------------------------------- compatibility


@dataclass(frozen=True)
class CompatibilityResidual:
    """Residual of the initial compatibility condition.

    ``rho0^(1/2) g = -lap u0 - (B0.grad)B0 + grad P0`` with ``P0`` chosen so
    the right side is divergence free.  ``g_norm`` is the L^2 norm of ``g``
    on ``{rho0 > delta max rho0}``; ``vacuum_mass`` the L^2 norm of the right
    side on the complement, where ``g`` is undefined.
    """

    g_norm: float
    P0: ScalarField
    vacuum_mass: float


def compatibility_residual(
    rho0: ScalarField, u0: VectorField2, B0: VectorField2, delta: float
) -> CompatibilityResidual:
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")
    grid = rho0.grid
    n = grid.n
    sp = grid.spectral
    u_hat = rfft2(u0.stack())
    B = B0.stack()
    B_hat = rfft2(B)
    div_u = irfft2(sp.ikx * u_hat[0] + sp.iky * u_hat[1], n)
    div_B = irfft2(sp.ikx * B_hat[0] + sp.iky * B_hat[1], n)
    if max(np.max(np.abs(div_u)), np.max(np.abs(div_B))) > 1e-10:
        raise ValueError("u0 and B0 must be divergence free")
    bgb = irfft2(sp.ikx * B_hat, n) * B[0] + irfft2(sp.iky * B_hat, n) * B[1]
    F_hat = sp.k2 * u_hat - rfft2(bgb)
    sx, sy = project_hat(F_hat[0], F_hat[1], sp)
    # grad P0 removes the gradient part of F
    p_hat = (sp.ikx * F_hat[0] + sp.iky * F_hat[1]) * sp.inv_k2
    solenoidal = irfft2(np.stack([sx, sy]), n)
    mag2 = solenoidal[0] ** 2 + solenoidal[1] ** 2
    rho = rho0.values
    inside = rho > delta * float(rho.max())
    dA = grid.cell_area
    g2 = np.where(inside, mag2 / np.where(inside, rho, 1.0), 0.0)
    return CompatibilityResidual(
        g_norm=math.sqrt(float(np.sum(g2)) * dA),
        P0=ScalarField(grid, irfft2(p_hat, n)),
        vacuum_mass=math.sqrt(float(np.sum(np.where(inside, 0.0, mag2))) * dA),
    )
