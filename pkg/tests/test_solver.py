"""Time stepping, scenarios and the compatibility residual."""

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhd2d.fields import (
    Grid,
    ScalarField,
    VectorField2,
    divergence,
    gradient,
    integrate,
    irfft2,
    leray_project,
    norm_lp,
    rfft2,
)
from mhd2d.solver import (
    CFLWarning,
    ConvergenceError,
    Scenario,
    SolverConfig,
    advect_density,
    bubble_density,
    cfl_dt,
    compatibility_residual,
    induction_step,
    momentum_step,
    pressure_project,
    run,
    step,
    step_count,
)
from mhd2d.state import State

from .conftest import band_limited

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def maxabs(f):
    if isinstance(f, VectorField2):
        return max(maxabs(f.x), maxabs(f.y))
    return float(np.max(np.abs(f.values)))


def energy(s: State) -> float:
    kin = 0.5 * integrate(s.rho.values * (s.u.x.values**2 + s.u.y.values**2), s.grid)
    mag = 0.5 * integrate(s.B.x.values**2 + s.B.y.values**2, s.grid)
    return kin + mag


def sin_y_field(grid, a=1.0):
    return VectorField2.from_function(grid, lambda x, y: (a * np.sin(y), 0 * x))


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"dt": 0}, {"dt": 1e-3, "eps_rel": 0}, {"dt": 1e-3, "eps_rel": 1}, {"dt": 1e-3, "picard_max": 0}]
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_defaults(self):
        c = SolverConfig(dt=1e-3)
        assert (c.eps_rel, c.cfl, c.dealias, c.picard_tol, c.picard_max) == (1e-6, 0.5, True, 1e-10, 500)

    def test_cfl_dt(self, grid):
        u = VectorField2.from_arrays(grid, np.full((32, 32), 2.0), np.zeros((32, 32)))
        assert cfl_dt(u) == pytest.approx(0.5 * grid.spacing / 2.0)
        assert cfl_dt(VectorField2.zeros(grid)) == math.inf


class TestAdvection:
    def test_zero_velocity(self, grid):
        rho = bubble_density(grid)
        out = advect_density(rho, VectorField2.zeros(grid), 0.1)
        assert np.array_equal(out.values, rho.values)

    def test_one_cell_shift(self, grid):
        rho = band_limited(grid, np.random.default_rng(0)) + 2.0
        u = VectorField2.from_arrays(grid, np.ones((32, 32)), np.zeros((32, 32)))
        out = advect_density(rho, u, grid.spacing)
        assert np.max(np.abs(out.values - np.roll(rho.values, 1, axis=1))) <= 1e-13

    @given(seeds, st.floats(1e-3, 0.2))
    def test_bounds_preserved(self, seed, dt):
        g = Grid(32)
        rng = np.random.default_rng(seed)
        rho = ScalarField(g, np.abs(band_limited(g, rng).values))
        u = VectorField2(band_limited(g, rng), band_limited(g, rng))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CFLWarning)
            out = advect_density(rho, u, dt)
        assert out.values.min() >= rho.values.min()
        assert out.values.max() <= rho.values.max()

    def test_cfl_warning(self, grid):
        u = VectorField2.from_arrays(grid, np.full((32, 32), 10.0), np.zeros((32, 32)))
        with pytest.warns(CFLWarning):
            advect_density(ScalarField.constant(grid, 1.0), u, 1.0)

    def test_rejects_nonpositive_dt(self, grid):
        with pytest.raises(ValueError):
            advect_density(ScalarField.constant(grid, 1.0), VectorField2.zeros(grid), 0.0)


class TestMomentum:
    def test_lorentz_of_sin_y_vanishes(self, grid):
        s = State(0.0, bubble_density(grid), VectorField2.zeros(grid), sin_y_field(grid))
        assert maxabs(momentum_step(s, SolverConfig(dt=1e-2))) <= 1e-14

    def test_taylor_green_one_step(self):
        s = Scenario("taylor_green", n=32).initial_state()
        for dt in (1e-2, 5e-3):
            u, _ = pressure_project(momentum_step(s, SolverConfig(dt=dt)), s.rho, SolverConfig(dt=dt))
            exact = s.u * math.exp(-2 * dt)
            assert maxabs(u - exact) <= 2 * dt**2

    def test_explicit_euler_oracle(self):
        """Constant density: one step agrees with fine explicit Euler to O(dt^2)."""
        g = Grid(32)
        rng = np.random.default_rng(11)
        u0 = leray_project(VectorField2(band_limited(g, rng, 4), band_limited(g, rng, 4)) * 0.3)
        sp = g.spectral
        mask = sp.dealias

        def rhs(u):
            a = u.stack()
            a_hat = mask * rfft2(a)
            conv = sum(irfft2(ik * a_hat, g.n) * a[j] for j, ik in enumerate((sp.ikx, sp.iky)))
            out = leray_project(VectorField2.from_arrays(g, *(-conv)))
            lap = irfft2(-sp.k2 * a_hat, g.n)
            return out + VectorField2.from_arrays(g, *lap)

        errs = []
        for dt in (4e-3, 2e-3):
            ref = u0
            for _ in range(100):
                ref = ref + rhs(ref) * (dt / 100)
            s = State(0.0, ScalarField.constant(g, 1.0), u0, VectorField2.zeros(g))
            cfg = SolverConfig(dt=dt)
            u, _ = pressure_project(momentum_step(s, cfg), s.rho, cfg)
            errs.append(maxabs(u - ref))
        # implicit diffusion error ~ |k|^4 dt^2 / 2 with |k|^2 <= 16
        assert errs[0] <= 0.5 * 16**2 * 4e-3**2 * maxabs(u0)
        assert 3.0 <= errs[0] / errs[1] <= 5.0


class TestProjection:
    def test_divergence_free_input_unchanged(self):
        s = Scenario("taylor_green", n=32).initial_state()
        u, P = pressure_project(s.u, bubble_density(s.grid) + 0.5, SolverConfig(dt=1e-2))
        assert maxabs(u - s.u) <= 1e-12
        assert maxabs(P) <= 1e-10

    @given(seeds)
    def test_unit_density_is_leray(self, seed):
        g = Grid(32)
        rng = np.random.default_rng(seed)
        v = VectorField2(band_limited(g, rng), band_limited(g, rng))
        u, _ = pressure_project(v, ScalarField.constant(g, 1.0), SolverConfig(dt=1e-2))
        assert maxabs(u - leray_project(v)) <= 1e-9

    def test_vacuum_bubble_gradient(self, grid64):
        rho = bubble_density(grid64)
        f = ScalarField.from_function(grid64, lambda x, y: np.sin(x) * np.sin(y))
        u, P = pressure_project(gradient(f), rho, SolverConfig(dt=5e-4))
        assert maxabs(divergence(u)) <= 1e-10
        assert abs(P.mean()) <= 1e-12

    def test_nonconvergence_reports_residual(self, grid64):
        rho = bubble_density(grid64)
        f = ScalarField.from_function(grid64, lambda x, y: np.sin(x) * np.sin(2 * y))
        v = gradient(f) + sin_y_field(grid64)
        with pytest.raises(ConvergenceError) as info:
            pressure_project(v, rho, SolverConfig(dt=5e-4, picard_max=1))
        assert info.value.iterations == 1 and info.value.residual > 0


class TestInduction:
    def test_heat_decay(self, grid):
        dt = 0.01
        s = State(0.0, ScalarField.constant(grid, 1.0), VectorField2.zeros(grid), sin_y_field(grid))
        assert maxabs(induction_step(s, SolverConfig(dt=dt)) - s.B * math.exp(-dt)) <= 1e-12

    def test_zero_stays_zero(self):
        s = Scenario("taylor_green", n=32).initial_state()
        assert maxabs(induction_step(s, SolverConfig(dt=1e-2))) == 0.0

    @given(seeds)
    def test_solenoidal(self, seed):
        s = Scenario("random_smooth", n=32, seed=seed % 1000).initial_state()
        assert maxabs(divergence(induction_step(s, SolverConfig(dt=1e-2)))) <= 1e-10


class TestStep:
    def test_rest_state_only_advances_time(self, grid):
        s = State(0.3, bubble_density(grid), VectorField2.zeros(grid), VectorField2.zeros(grid))
        out = step(s, SolverConfig(dt=0.01))
        assert out.t == pytest.approx(0.31)
        assert np.array_equal(out.rho.values, s.rho.values)
        assert maxabs(out.u) == 0.0 and maxabs(out.B) == 0.0

    def test_mhd_rest(self):
        s = Scenario("mhd_rest", n=32).initial_state()
        dt = 0.01
        out = step(s, SolverConfig(dt=dt))
        assert np.array_equal(out.rho.values, s.rho.values)
        assert maxabs(out.u) <= 1e-10
        assert maxabs(out.B - s.B * math.exp(-dt)) <= 1e-12

    @pytest.mark.parametrize("name", ["taylor_green", "vacuum_bubble", "random_smooth", "mhd_rest"])
    def test_energy_does_not_grow(self, name):
        s = Scenario(name, n=32).initial_state()
        out = step(s, SolverConfig(dt=1e-3))
        assert energy(out) <= energy(s)
        out.validate()


class TestScenarios:
    @pytest.mark.parametrize("name", ["taylor_green", "mhd_rest", "vacuum_bubble", "random_smooth"])
    def test_initial_states_valid(self, name):
        Scenario(name, n=32, seed=3).initial_state().validate()

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="taylor_green"):
            Scenario("nope")

    def test_bubble_profile(self, grid64):
        rho = bubble_density(grid64)
        X, Y = grid64.coordinates()
        d = np.hypot(X - math.pi, Y - math.pi)
        assert np.all(rho.values[d <= 0.5] == 0.0)
        assert np.all(rho.values[d >= 0.8] == 1.0)

    def test_random_smooth_deterministic(self):
        a = Scenario("random_smooth", n=32, seed=7).initial_state()
        b = Scenario("random_smooth", n=32, seed=7).initial_state()
        assert np.array_equal(a.u.stack(), b.u.stack())
        assert a.rho.values.min() >= 0.0


class TestRun:
    def test_zero_horizon(self):
        res = run(Scenario("taylor_green", n=32), SolverConfig(dt=1e-2), 0.0)
        assert len(res.trajectory.states) == 1
        assert len(res.series) == 0 and not res.failed

    def test_step_count(self):
        assert step_count(1.0, 5e-4) == 2000
        with pytest.raises(ValueError):
            step_count(0.1, 0.03)
        with pytest.raises(ValueError):
            step_count(-1.0, 0.1)

    def test_snapshot_cadence(self):
        seen = []
        res = run(
            Scenario("taylor_green", n=16), SolverConfig(dt=1e-2), 0.1, 5,
            on_snapshot=lambda i, s: seen.append(i),
        )
        assert seen == [0, 1, 2]
        assert res.trajectory.times == pytest.approx([0.0, 0.05, 0.1])
        assert len(res.series) == 11

    def test_mass_drift(self):
        res = run(Scenario("vacuum_bubble", n=32), SolverConfig(dt=2e-3), 0.2, 100)
        m = res.series["rho_mass"]
        assert abs(m[-1] / m[0] - 1) <= 5e-3

    def test_abort_keeps_partial_result(self):
        s = Scenario("random_smooth", n=32, velocity_amplitude=50.0).initial_state()
        res = run(s, SolverConfig(dt=0.05, picard_max=2), 0.5, 1)
        assert res.failed and res.error
        assert res.steps < 10


class TestCompatibility:
    def test_zero_data(self, grid):
        r = compatibility_residual(ScalarField.constant(grid, 1.0), VectorField2.zeros(grid), VectorField2.zeros(grid), 0.1)
        assert r.g_norm == 0.0 and maxabs(r.P0) == 0.0

    def test_mhd_rest(self):
        s = Scenario("mhd_rest", n=32).initial_state()
        r = compatibility_residual(s.rho, s.u, s.B, 0.1)
        assert r.g_norm <= 1e-12 and r.vacuum_mass <= 1e-12

    def test_taylor_green(self):
        s = Scenario("taylor_green", n=32).initial_state()
        r = compatibility_residual(s.rho, s.u, s.B, 0.1)
        assert r.g_norm == pytest.approx(2 * norm_lp(s.u, 2), rel=1e-12)

    def test_gradient_part_goes_to_pressure(self, grid):
        rho = ScalarField.constant(grid, 1.0)
        B = VectorField2.from_function(grid, lambda x, y: (np.sin(y), np.sin(x)))
        r = compatibility_residual(rho, VectorField2.zeros(grid), B, 0.1)
        bgb = VectorField2.from_function(
            grid, lambda x, y: (np.sin(x) * np.cos(y), np.sin(y) * np.cos(x))
        )
        residual = leray_project(bgb * -1.0)
        assert r.g_norm == pytest.approx(norm_lp(residual, 2), abs=1e-12)
        # F = -(B.grad)B is a pure gradient here and grad P0 cancels it
        assert maxabs(gradient(r.P0) - (bgb - leray_project(bgb))) <= 1e-12

    def test_rejects_compressible(self, grid):
        u = VectorField2.from_function(grid, lambda x, y: (np.sin(x), 0 * y))
        with pytest.raises(ValueError):
            compatibility_residual(ScalarField.constant(grid, 1.0), u, VectorField2.zeros(grid), 0.1)
