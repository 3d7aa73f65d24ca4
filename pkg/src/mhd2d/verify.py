"""Verification suites: each returns one result per acceptance criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import calibration as cal
from .estimates import (
    density_max_principle,
    energy_identity_defect,
    first_level_identity_defect,
    phi,
    poisson_regularity_probe,
    psi,
    psi_series,
    random_forcing,
    serrin_integral,
    stokes_regularity_probe,
)
from .fields import Grid, norm_lp, norm_sobolev, rfft2
from .littlewood_paley import (
    decompose,
    delta_q,
    kappa,
    log_sobolev_ratio,
)
from .series import Trajectory
from .solver import Scenario, SolverConfig, run

SUITES = ("energy", "density", "exact", "lp", "regularity", "identities")
CAL_MARGIN = 1.05
HALVING = (1.6, 2.4)
IDENTITY_T = 0.2
ENERGY_T = 0.5
ENERGY_SCENARIOS = ("taylor_green", "vacuum_bubble")


@dataclass(frozen=True)
class Params:
    """Run parameters a suite draws from a config file."""

    n: int = 64
    dt: float = 5e-4
    t_end: float = 1.0
    scenario: str = "taylor_green"
    seed: int = 0
    eps_rel: float = 1e-6


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:>2} {self.name}: {self.detail}"


class SuiteError(ValueError):
    """A suite cannot run with the given parameters."""


class RunAborted(RuntimeError):
    """A run inside a suite stopped on a solver error."""


def _run(p: Params, name: str, dt: float, t_end: float, snapshot_every: int | None = None):
    steps = max(1, round(t_end / dt))
    res = run(
        Scenario(name, n=p.n, seed=p.seed),
        SolverConfig(dt=dt, eps_rel=p.eps_rel),
        t_end,
        snapshot_every or steps,
    )
    if res.failed:
        raise RunAborted(f"{name} run aborted: {res.error}")
    return res


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else math.inf


def _in(x: float, lo_hi) -> bool:
    return lo_hi[0] <= x <= lo_hi[1]


# -------------------------------------------------------------- exact


def taylor_green_oracle(p: Params) -> CriterionResult:
    T = p.t_end
    errs = []
    for dt in (p.dt, p.dt / 2):
        s = _run(p, "taylor_green", dt, T).series
        l2 = s["u_L2"][-1] / s["u_L2"][0]
        ek = s["e_kin"][-1] / s["e_kin"][0]
        errs.append((abs(l2 / math.exp(-2 * T) - 1), abs(ek / math.exp(-4 * T) - 1)))
    (e_l2, e_ek), (h_l2, h_ek) = errs
    r_l2, r_ek = _ratio(e_l2, h_l2), _ratio(e_ek, h_ek)
    ok = e_l2 <= 0.02 and e_ek <= 0.04 and _in(r_l2, HALVING) and _in(r_ek, HALVING)
    return CriterionResult(
        1,
        "Taylor-Green decay",
        ok,
        f"L2 ratio err {e_l2:.3e} (<=2e-2), energy err {e_ek:.3e} (<=4e-2), "
        f"halving ratios {r_l2:.3f}, {r_ek:.3f} (in [1.6, 2.4])",
    )


def mhd_rest_oracle(p: Params) -> CriterionResult:
    T = p.t_end
    res = _run(p, "mhd_rest", p.dt, T)
    s = res.series
    b_ratio = math.sqrt(s["e_mag"][-1] / s["e_mag"][0])
    b_err = abs(b_ratio / math.exp(-T) - 1)
    u_inf = float(s["u_Linf"].max())
    rho0 = Scenario("mhd_rest", n=p.n, seed=p.seed).initial_state().rho.values
    drho = float(np.max(np.abs(res.final_state.rho.values - rho0)))
    ok = b_err <= 0.01 and u_inf <= 1e-8 and drho <= 1e-12
    return CriterionResult(
        2,
        "vacuum exact solution",
        ok,
        f"|B| ratio err {b_err:.3e} (<=1e-2), max |u|_inf {u_inf:.2e} (<=1e-8), "
        f"rho change {drho:.2e} (<=1e-12)",
    )


def suite_exact(p: Params) -> list[CriterionResult]:
    if p.scenario == "taylor_green":
        return [taylor_green_oracle(p)]
    if p.scenario == "mhd_rest":
        return [mhd_rest_oracle(p)]
    raise SuiteError("the exact suite needs scenario taylor_green or mhd_rest")


# ------------------------------------------------------------- energy


def energy_ladder(p: Params, scenario: str, t_end: float = ENERGY_T) -> list[float]:
    """Final relative energy defect at dt, dt/2 and dt/4."""
    out = []
    for k in range(3):
        s = _run(p, scenario, p.dt / 2**k, t_end).series
        out.append(float(energy_identity_defect(s).relative[-1]))
    return out


def energy_criterion(per_scenario: dict) -> CriterionResult:
    ok = True
    parts = []
    for name, ladder in per_scenario.items():
        mono = all(b < a for a, b in zip(ladder, ladder[1:]))
        ok &= ladder[0] <= 2e-2 and mono
        parts.append(f"{name} defects {', '.join(f'{d:.2e}' for d in ladder)}")
    return CriterionResult(3, "energy identity", ok, "; ".join(parts) + " (<=2e-2, decreasing)")


def suite_energy(p: Params) -> list[CriterionResult]:
    return [energy_criterion({name: energy_ladder(p, name) for name in ENERGY_SCENARIOS})]


# ------------------------------------------------------------ density


def suite_density(p: Params) -> list[CriterionResult]:
    res = _run(p, p.scenario, p.dt, p.t_end)
    b = density_max_principle(res.series)
    ok = b.passed and b.max_decay_percent < 5.0
    return [
        CriterionResult(
            4,
            "density maximum principle",
            ok,
            f"{res.steps} steps, worst excursion {b.worst_excursion:.1e} (==0), "
            f"max decay {b.max_decay_percent:.3f}% (<5%)",
        )
    ]


# ----------------------------------------------------------------- lp


def lp_structure(p: Params) -> CriterionResult:
    grid = Grid(p.n)
    part = cal.partition_for(grid)
    unity = part.unity_defect()
    f = cal.random_field(grid, p.seed)
    recon = float(np.max(np.abs(decompose(f, part).reconstruct().values - f.values)))
    kmag = part.lattice_magnitude()
    f_peak = float(np.max(np.abs(f.spectrum())))
    leak = 0.0
    cross = 0.0
    fmax = float(np.max(np.abs(f.values)))
    for q in part.band_indices:
        band_hat = rfft2(delta_q(f, part, q).values)
        outside = (kmag < 2.0**q * (1 - 1e-12)) | (kmag > 2.0**q * 8 / 3 * (1 + 1e-12))
        leak = max(leak, float(np.max(np.abs(band_hat[outside]), initial=0.0)) / f_peak)
        for q2 in part.band_indices:
            if abs(q - q2) >= 2:
                dd = delta_q(delta_q(f, part, q2), part, q)
                cross = max(cross, float(np.max(np.abs(dd.values))) / fmax)
    kap = (kappa(4.0), kappa(8.0))
    ok = unity <= 1e-12 and recon <= 1e-10 and leak <= 1e-13 and cross <= 1e-13 and kap == (0.5, 0.25)
    return CriterionResult(
        5,
        "Littlewood-Paley structure",
        ok,
        f"unity {unity:.1e} (<=1e-12), reconstruction {recon:.1e} (<=1e-10), "
        f"leakage {leak:.1e} (<=1e-13), cross bands {cross:.1e} (<=1e-13), "
        f"kappa(4)={kap[0]}, kappa(8)={kap[1]}",
    )


def bernstein_check(p: Params) -> CriterionResult:
    c = cal.load_calibration()["bernstein_p2"]
    sup = cal.bernstein_sup(Grid(p.n), cal.CHECK_SEEDS)
    return CriterionResult(
        6,
        "Bernstein boundedness",
        sup <= CAL_MARGIN * c,
        f"sup ratio {sup:.6f} vs calibrated {c:.6f} (<= x{CAL_MARGIN})",
    )


def log_sobolev_check(p: Params, traj: Trajectory | None = None) -> CriterionResult:
    constants = cal.load_calibration()
    grid = Grid(p.n)
    c1 = constants["log_sobolev_q4"]
    c2 = constants["time_integrated_q4"]
    fields = cal.stress_fields(grid)
    fields += [cal.random_field(grid, s) for s in range(50)]
    s1 = max(log_sobolev_ratio(f, cal.LOG_SOBOLEV_Q) for f in fields)
    if traj is None:
        traj = cal.tg_trajectory(p.n)
    s2 = cal.time_integrated_sup(traj)
    ok = s1 <= CAL_MARGIN * c1 and s2 <= CAL_MARGIN * c2
    return CriterionResult(
        7,
        "log-Sobolev boundedness",
        ok,
        f"pointwise sup {s1:.6f} vs {c1:.6f}, time-integrated sup {s2:.6f} vs {c2:.6f} "
        f"(<= x{CAL_MARGIN})",
    )


def suite_lp(p: Params) -> list[CriterionResult]:
    return [lp_structure(p), bernstein_check(p), log_sobolev_check(p)]


# --------------------------------------------------------- regularity


def suite_regularity(p: Params) -> list[CriterionResult]:
    grid = Grid(p.n)
    constants = cal.load_calibration()
    forcings = [random_forcing(grid, np.random.default_rng(s)) for s in cal.CHECK_SEEDS]
    q2 = max(
        max(stokes_regularity_probe(F, 2.0), poisson_regularity_probe(F, 2.0)) for F in forcings
    )
    ok = q2 <= 1 + 1e-10
    parts = [f"q=2 sup {q2:.6f} (<=1+1e-10)"]
    for q in cal.REGULARITY_QS:
        for kind, probe in (("stokes", stokes_regularity_probe), ("poisson", poisson_regularity_probe)):
            sup = max(probe(F, q) for F in forcings)
            c = cal.regularity_constant(constants, kind, q)
            ok &= sup <= CAL_MARGIN * c
            parts.append(f"{kind} q={q:.4g} {sup:.4f} vs {c:.4f}")
    return [CriterionResult(8, "regularity probes", ok, ", ".join(parts))]


# ---------------------------------------------------------- identities


def _closed_form_induction(dt: float, a: float, t: np.ndarray) -> np.ndarray:
    """Centered-difference value of the induction left side on the decaying mode."""
    c = 2.0 * math.pi**2 * a**2
    grad_rate = math.sinh(2 * dt) / (2 * dt)
    bt = (math.sinh(dt) / dt) ** 2
    return c * np.exp(-2 * t) * (bt - grad_rate)


def identities_criterion(p: Params) -> CriterionResult:
    T = IDENTITY_T
    tg, mr = [], []
    oracle_err = 0.0
    for dt in (p.dt, p.dt / 2):
        m, _ = first_level_identity_defect(_run(p, "taylor_green", dt, T, 1).trajectory)
        tg.append(m.max_relative)
        traj = _run(p, "mhd_rest", dt, T, 1).trajectory
        m2, ind = first_level_identity_defect(traj)
        mr.append((m2.max_relative, ind.max_relative))
        expect = _closed_form_induction(dt, 1.0, ind.t)
        oracle_err = max(oracle_err, float(np.max(np.abs(ind.lhs - expect))) / (2 * math.pi**2))
    r_tg = _ratio(tg[0], tg[1])
    r_ind = _ratio(mr[0][1], mr[1][1])
    ok = (
        max(tg) <= 5e-2
        and max(max(x) for x in mr) <= 5e-2
        and _in(r_tg, HALVING)
        and 3.2 <= r_ind <= 4.8
        and oracle_err <= 1e-10
        and mr[0][0] == 0.0
    )
    return CriterionResult(
        9,
        "first-level identities",
        ok,
        f"taylor_green momentum {tg[0]:.2e} -> {tg[1]:.2e} (ratio {r_tg:.3f} in [1.6, 2.4]); "
        f"mhd_rest momentum {mr[0][0]:.1e}, induction {mr[0][1]:.2e} -> {mr[1][1]:.2e} "
        f"(ratio {r_ind:.3f}, second order), closed-form mismatch {oracle_err:.1e}",
    )


def _nondecreasing(values) -> bool:
    v = np.asarray(values)
    return bool(np.all(np.diff(v) >= -1e-12 * np.maximum(1.0, np.abs(v[1:]))))


def functionals_criterion(p: Params, trajectories: dict | None = None) -> CriterionResult:
    if trajectories is None:
        trajectories = {
            "taylor_green": _run(p, "taylor_green", p.dt, 1.0, 20).trajectory,
            "mhd_rest": _run(p, "mhd_rest", p.dt, 1.0, 20).trajectory,
            "vacuum_bubble": _run(p, "vacuum_bubble", p.dt, 0.1, 10).trajectory,
        }
    ok = True
    parts = []
    for name, traj in trajectories.items():
        ph = [phi(traj, t) for t in traj.times]
        ps = psi_series(traj)
        mono = _nondecreasing(ph) and _nondecreasing(ps)
        s0 = traj.states[0]
        expect = math.e + norm_sobolev(s0.u, 1, 2) ** 2 + norm_sobolev(s0.B, 1, 2) ** 2
        err0 = abs(psi(traj, traj.times[0]) - expect) / expect
        ok &= mono and err0 <= 1e-10
        parts.append(f"{name}: monotone={mono}, Psi(0) err {err0:.1e}")
    tg = trajectories["taylor_green"]
    T = float(tg.times[-1])
    u0 = norm_lp(tg.states[0].u, math.inf)
    exact = u0**2 * (1 - math.exp(-4 * T)) / 4
    serr = abs(serrin_integral(tg, math.inf, 2.0) / exact - 1)
    ok &= serr <= 0.03
    parts.append(f"Serrin(inf, 2) err {serr:.2e} (<=3e-2)")
    return CriterionResult(10, "functional sanity", ok, "; ".join(parts))


def suite_identities(p: Params) -> list[CriterionResult]:
    return [identities_criterion(p), functionals_criterion(p)]


_SUITES = {
    "energy": suite_energy,
    "density": suite_density,
    "exact": suite_exact,
    "lp": suite_lp,
    "regularity": suite_regularity,
    "identities": suite_identities,
}


def run_suite(name: str, p: Params) -> list[CriterionResult]:
    if name not in _SUITES:
        raise SuiteError(f"unknown suite {name!r}; valid: {', '.join(SUITES)}")
    return _SUITES[name](p)
