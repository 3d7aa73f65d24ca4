import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mhd2d.fields import Grid, ScalarField, VectorField2, irfft2

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def band_limited(grid: Grid, rng: np.random.Generator, kmax: int = 6) -> ScalarField:
    """Random real field with modes |k| <= kmax."""
    sp = grid.spectral
    c = rng.standard_normal(sp.k2.shape) + 1j * rng.standard_normal(sp.k2.shape)
    c = np.where(sp.k2_full <= kmax**2, c, 0.0) / grid.n
    return ScalarField(grid, irfft2(c, grid.n))


def band_limited_vector(grid: Grid, rng: np.random.Generator, kmax: int = 6) -> VectorField2:
    return VectorField2(band_limited(grid, rng, kmax), band_limited(grid, rng, kmax))


@pytest.fixture
def grid():
    return Grid(32)


@pytest.fixture
def grid64():
    return Grid(64)


_ACCEPTANCE_LINES: list = []


@pytest.fixture
def acceptance_lines():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
