"""Dyadic partition, band operators and the inequality probes."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mhd2d.fields import Grid, ScalarField, norm_hs, norm_lp, norm_sobolev, rfft2
from mhd2d.littlewood_paley import (
    ZeroBandError,
    bernstein_ratio,
    build_partition,
    chi_profile,
    decompose,
    delta_q,
    kappa,
    ln_plus,
    log_sobolev_ratio,
    optimal_band_count,
    phi_profile,
    s_q,
    three_part_split,
    time_integrated_ratio,
    time_l2_norm,
    window_integral,
)

from .conftest import band_limited

seeds = st.integers(min_value=0, max_value=2**31 - 1)
N = 32
Q_MAX = 4


@pytest.fixture(scope="module")
def part():
    return build_partition(Grid(N), -2, Q_MAX)


def maxabs(f):
    return float(np.max(np.abs(f.values)))


def cos2x(grid):
    return ScalarField.from_function(grid, lambda x, y: np.cos(2 * x))


class TestProfiles:
    def test_chi_plateau_and_support(self):
        r = np.linspace(0, 3, 3001)
        c = chi_profile(r)
        assert np.all(c[r <= 1] == 1.0)
        assert np.all(c[r >= 4 / 3] == 0.0)
        assert np.all((c >= 0) & (c <= 1))

    def test_phi_ring_support(self):
        r = np.linspace(0, 4, 4001)
        p = phi_profile(r)
        assert np.all(p[(r < 1) | (r > 8 / 3)] == 0.0)
        assert np.all(p >= 0)
        assert phi_profile(np.array([2.0]))[0] == 1.0


class TestPartition:
    def test_rejects_bad_ranges(self):
        with pytest.raises(ValueError):
            build_partition(Grid(N), 3, 3)
        with pytest.raises(ValueError, match="Nyquist"):
            build_partition(Grid(N), -2, 3)

    def test_origin(self, part):
        assert part.chi[0, 0] == 1.0
        assert all(part.phi[q][0, 0] == 0.0 for q in part.band_indices)

    def test_unity(self, part):
        assert part.unity_defect() <= 1e-12

    def test_unity_at_random_frequencies(self, part):
        rng = np.random.default_rng(3)
        iy = rng.integers(0, N, 50)
        ix = rng.integers(0, N // 2 + 1, 50)
        total = part.chi[iy, ix] + sum(part.phi[q][iy, ix] for q in part.band_indices)
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    def test_ring_support(self, part):
        kmag = part.lattice_magnitude()
        for q in part.band_indices:
            outside = (kmag < 0.75 * 2.0**q) | (kmag > 8 / 3 * 2.0**q)
            assert np.all(part.phi[q][outside] == 0.0)


class TestBandOperators:
    def test_constant_has_no_bands(self, part):
        f = ScalarField.constant(part.grid, 2.5)
        for q in part.band_indices:
            assert maxabs(delta_q(f, part, q)) <= 1e-13
        for q in range(part.q_min, part.q_max + 1):
            assert np.max(np.abs(s_q(f, part, q).values - 2.5)) <= 1e-13

    def test_cos2x_lives_in_band_zero(self, part):
        f = cos2x(part.grid)
        assert np.max(np.abs(delta_q(f, part, 0).values - f.values)) <= 1e-13
        for q in part.band_indices:
            if q != 0:
                assert maxabs(delta_q(f, part, q)) <= 1e-13

    def test_high_mode_absent_from_low_pass(self, part):
        f = ScalarField.from_function(part.grid, lambda x, y: np.cos(2**Q_MAX * x))
        for q in range(part.q_min, 3):
            assert maxabs(s_q(f, part, q)) <= 1e-13

    def test_out_of_range(self, part):
        f = cos2x(part.grid)
        with pytest.raises(ValueError):
            delta_q(f, part, part.q_min)
        with pytest.raises(ValueError):
            s_q(f, part, part.q_max + 2)

    @given(seeds)
    def test_telescoping(self, seed):
        part = build_partition(Grid(N), -2, Q_MAX)
        f = band_limited(part.grid, np.random.default_rng(seed), kmax=15)
        for q in range(part.q_min + 1, part.q_max):
            diff = s_q(f, part, q + 1).values - s_q(f, part, q).values
            assert np.max(np.abs(diff - delta_q(f, part, q).values)) <= 1e-12

    @given(seeds)
    def test_reconstruction_and_leakage(self, seed):
        part = build_partition(Grid(N), -2, Q_MAX)
        f = band_limited(part.grid, np.random.default_rng(seed), kmax=16)
        dec = decompose(f, part)
        assert np.max(np.abs(dec.reconstruct().values - f.values)) <= 1e-10
        energy = float(np.sum(part.grid.spectral.power(f.spectrum())))
        kmag = part.lattice_magnitude()
        for q, band in dec.bands:
            outside = (kmag < 0.75 * 2.0**q) | (kmag > 8 / 3 * 2.0**q)
            leak = float(np.sum(part.grid.spectral.power(rfft2(band.values))[outside]))
            assert leak <= 1e-13 * energy

    @given(seeds)
    def test_almost_orthogonality(self, seed):
        part = build_partition(Grid(N), -2, Q_MAX)
        f = band_limited(part.grid, np.random.default_rng(seed), kmax=16)
        for q in part.band_indices:
            for r in part.band_indices:
                if abs(q - r) >= 2:
                    assert maxabs(delta_q(delta_q(f, part, r), part, q)) <= 1e-13 * max(1, maxabs(f))


class TestThreePartSplit:
    def test_band_limited_has_no_high_part(self, part):
        f = ScalarField.from_function(part.grid, lambda x, y: np.sin(x) + np.cos(y))
        _, _, f3 = three_part_split(f, part, 1)
        assert maxabs(f3) <= 1e-13

    def test_constant(self, part):
        f = ScalarField.constant(part.grid, -1.5)
        f1, f2, f3 = three_part_split(f, part, 1)
        assert np.max(np.abs(f1.values + 1.5)) <= 1e-13
        assert maxabs(f2) <= 1e-13 and maxabs(f3) <= 1e-13

    def test_reconstruction(self, part):
        f = band_limited(part.grid, np.random.default_rng(5), kmax=16)
        f1, f2, f3 = three_part_split(f, part, 1)
        assert np.max(np.abs(f1.values + f2.values + f3.values - f.values)) <= 1e-10

    def test_rejects_unavailable_bands(self, part):
        f = cos2x(part.grid)
        with pytest.raises(ValueError):
            three_part_split(f, part, 0)
        with pytest.raises(ValueError):
            three_part_split(f, part, 2)


class TestBandCount:
    def test_kappa(self):
        assert kappa(4) == 0.5
        assert kappa(8) == 0.25
        assert 0 < kappa(2 + 1e-9) < 1e-8
        with pytest.raises(ValueError):
            kappa(2)

    def test_optimal_band_count(self):
        assert optimal_band_count(3.0, 3.0, 4) == 1
        assert optimal_band_count(2.0**2.5, 1.0, 4) == 6
        assert optimal_band_count(0.1, 1.0, 6) == 1
        with pytest.raises(ValueError):
            optimal_band_count(0.0, 1.0, 4)


class TestRatios:
    def test_bernstein_cos2x(self, part):
        r = bernstein_ratio(cos2x(part.grid), part, 0, 2.0)
        assert r == pytest.approx(1 / (math.pi * math.sqrt(2)), rel=1e-12)

    def test_bernstein_homogeneous(self, part):
        f = band_limited(part.grid, np.random.default_rng(9), kmax=12)
        assert bernstein_ratio(2 * f, part, 2, 2.0) == pytest.approx(
            bernstein_ratio(f, part, 2, 2.0), rel=1e-13
        )

    def test_bernstein_zero_band(self, part):
        with pytest.raises(ZeroBandError):
            bernstein_ratio(cos2x(part.grid), part, 3, 2.0)

    def test_ln_plus(self):
        assert ln_plus(0.5) == 0.0 and ln_plus(0.0) == 0.0
        assert ln_plus(math.e) == pytest.approx(1.0)

    def test_log_sobolev_constant(self):
        assert log_sobolev_ratio(ScalarField.constant(Grid(N), 0.5), 4.0) == pytest.approx(0.5)

    def test_log_sobolev_zero_field(self):
        with pytest.raises(ZeroBandError):
            log_sobolev_ratio(ScalarField.constant(Grid(N), 0.0), 4.0)

    def test_lacunary_family_bounded(self):
        g = Grid(64)
        x = g.coordinates()[0]
        ratios = []
        for m in range(1, 6):
            f = ScalarField(g, sum(np.cos(2.0**j * x) for j in range(1, m + 1)) / math.sqrt(m))
            ratios.append(log_sobolev_ratio(f, 4.0))
        assert max(ratios) < 0.1


class TestTimeIntegrated:
    def test_constant_in_time(self):
        g = Grid(16)
        f = ScalarField.from_function(g, lambda x, y: np.sin(x))
        series = [(0.1 * i, f) for i in range(11)]
        s, t = 0.2, 0.9
        w = math.sqrt(t - s)
        expect = w * norm_lp(f, math.inf) / (
            1 + w * norm_hs(f, 1) * math.sqrt(ln_plus(w * norm_sobolev(f, 1, 4.0)))
        )
        assert time_integrated_ratio(series, s, t, 4.0) == pytest.approx(expect, rel=1e-12)

    @given(st.floats(0.05, 0.95))
    def test_window_additivity(self, m):
        g = Grid(16)
        rng = np.random.default_rng(1)
        series = [(0.1 * i, band_limited(g, rng, 4)) for i in range(11)]
        norm = lambda f: float(np.max(np.abs(f.values)))  # noqa: E731
        whole = time_l2_norm(series, 0.0, 1.0, norm)
        split = math.hypot(time_l2_norm(series, 0.0, m, norm), time_l2_norm(series, m, 1.0, norm))
        assert whole == pytest.approx(split, rel=1e-12)

    def test_window_errors(self):
        with pytest.raises(ValueError):
            window_integral([0, 1], [1, 1], 0.5, 0.5)
        with pytest.raises(ValueError):
            window_integral([0, 1], [1, 1], 0.0, 2.0)
