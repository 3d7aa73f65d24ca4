"""Calibrated constants for the inequality checks.

The inequality constants are not given in closed form, so they are
measured once over seeded field families and stored in
``data/calibration.json``.  Checks then require later measurements to stay
within 5% of the stored value.  Calibration seeds are disjoint from the
check seeds.

Regenerate with ``python3 -m mhd2d.calibration``.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .estimates import poisson_regularity_probe, random_forcing, stokes_regularity_probe
from .fields import Grid, ScalarField, irfft2
from .littlewood_paley import (
    ZeroBandError,
    bernstein_ratio,
    build_partition,
    log_sobolev_ratio,
    time_integrated_ratio,
)

CALIBRATION_FILE = "calibration.json"
CALIBRATION_N = 64
CALIBRATION_SEEDS = range(1000, 1400)
CHECK_SEEDS = range(0, 100)
REGULARITY_QS = (4.0 / 3.0, 4.0)
LOG_SOBOLEV_Q = 4.0
TG_DT = 5e-4
TG_T_END = 1.0
TG_SNAPSHOT_EVERY = 20


def partition_for(grid: Grid):
    q_max = int(math.log2(grid.n // 2))
    return build_partition(grid, -2, q_max)


def random_field(grid: Grid, seed: int) -> ScalarField:
    """Zero-mean field with Gaussian coefficients damped by ``1/(1+|k|^2)``."""
    rng = np.random.default_rng(seed)
    sp = grid.spectral
    c = rng.standard_normal(sp.k2.shape) + 1j * rng.standard_normal(sp.k2.shape)
    c = np.where(sp.k2_full > 0, c / (1.0 + sp.k2_full), 0.0)
    return ScalarField(grid, irfft2(c, grid.n))


def log_stress_field(grid: Grid, m: int) -> ScalarField:
    """``sum_{0<|k|<=2**m} |k|^-2 e^{ik.x}``.

    Its sup grows like ``m`` while its Dirichlet energy grows like ``m``,
    the borderline case of the logarithmic embedding.
    """
    sp = grid.spectral
    keep = (sp.k2_full > 0) & (sp.k2_full <= 4.0**m)
    return ScalarField(grid, irfft2(np.where(keep, 1.0 / np.where(keep, sp.k2_full, 1.0), 0.0), grid.n))


def log_stress_orders(grid: Grid) -> range:
    return range(0, int(math.log2(grid.n // 2)) + 1)


def lacunary_field(grid: Grid, m: int) -> ScalarField:
    """``m**-0.5 * sum_{j=1..m} cos(2**j x)``."""
    x = grid.coordinates()[0]
    return ScalarField(grid, sum(np.cos(2.0**j * x) for j in range(1, m + 1)) / math.sqrt(m))


def lacunary_orders(grid: Grid) -> range:
    return range(1, int(math.log2(grid.n // 2)) + 1)


def stress_fields(grid: Grid) -> list[ScalarField]:
    fields = [lacunary_field(grid, m) for m in lacunary_orders(grid)]
    return fields + [log_stress_field(grid, m) for m in log_stress_orders(grid)]


def tg_windows() -> list[tuple[float, float]]:
    """Twenty overlapping windows inside ``[0, 1]``."""
    return [(0.04 * i, 0.04 * i + 0.2) for i in range(20)]


def bernstein_sup(grid: Grid, seeds) -> float:
    part = partition_for(grid)
    best = 0.0
    for seed in seeds:
        f = random_field(grid, seed)
        for q in part.band_indices:
            try:
                best = max(best, bernstein_ratio(f, part, q, 2.0))
            except ZeroBandError:
                continue
    return best


def log_sobolev_sup(grid: Grid, seeds) -> float:
    fields = stress_fields(grid)
    fields += [random_field(grid, s) for s in seeds]
    return max(log_sobolev_ratio(f, LOG_SOBOLEV_Q) for f in fields)


def tg_trajectory(n: int = CALIBRATION_N):
    from .solver import Scenario, SolverConfig, run

    res = run(Scenario("taylor_green", n=n), SolverConfig(dt=TG_DT), TG_T_END, TG_SNAPSHOT_EVERY)
    return res.trajectory


def time_integrated_sup(traj) -> float:
    series = [(s.t, s.u) for s in traj.states]
    return max(time_integrated_ratio(series, a, b, LOG_SOBOLEV_Q) for a, b in tg_windows())


def regularity_sup(grid: Grid, seeds, q: float) -> dict:
    stokes = poisson = 0.0
    for seed in seeds:
        F = random_forcing(grid, np.random.default_rng(seed))
        stokes = max(stokes, stokes_regularity_probe(F, q))
        poisson = max(poisson, poisson_regularity_probe(F, q))
    return {"stokes": stokes, "poisson": poisson}


def _q_key(q: float) -> str:
    return f"{q:.6g}"


def compute_calibration(n: int = CALIBRATION_N, seeds=CALIBRATION_SEEDS) -> dict:
    grid = Grid(n)
    return {
        "n": n,
        "seeds": [seeds[0], seeds[-1]],
        "bernstein_p2": bernstein_sup(grid, seeds),
        "log_sobolev_q4": log_sobolev_sup(grid, seeds),
        "time_integrated_q4": time_integrated_sup(tg_trajectory(n)),
        "regularity": {_q_key(q): regularity_sup(grid, seeds, q) for q in REGULARITY_QS},
    }


def regularity_constant(cal: dict, kind: str, q: float) -> float:
    return cal["regularity"][_q_key(q)][kind]


def load_calibration() -> dict:
    text = resources.files("mhd2d").joinpath("data").joinpath(CALIBRATION_FILE).read_text()
    return json.loads(text)


def main() -> None:
    out = Path(__file__).parent / "data" / CALIBRATION_FILE
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(compute_calibration(), indent=2) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
