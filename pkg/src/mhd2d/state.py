"""Solver state: a time-stamped triple (rho, u, B)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Grid, ScalarField, VectorField2, divergence

RHO_FLOOR_TOL = 1e-13
DIV_TOL = 1e-10


class InvariantError(ValueError):
    """A state violates density nonnegativity or the solenoidal constraints."""


@dataclass(frozen=True)
class State:
    t: float
    rho: ScalarField
    u: VectorField2
    B: VectorField2

    def __post_init__(self):
        grids = {self.rho.grid, self.u.grid, self.B.grid}
        if len(grids) != 1:
            raise ValueError("rho, u and B must share one grid")

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def divergence_max(self) -> tuple[float, float]:
        du = float(np.max(np.abs(divergence(self.u).values)))
        dB = float(np.max(np.abs(divergence(self.B).values)))
        return du, dB

    def validate(self) -> None:
        """Raise :class:`InvariantError` if an invariant is broken."""
        rho_min = float(self.rho.values.min())
        if rho_min < -RHO_FLOOR_TOL:
            raise InvariantError(f"negative density {rho_min:.3e} at t={self.t}")
        du, dB = self.divergence_max()
        if du > DIV_TOL or dB > DIV_TOL:
            raise InvariantError(
                f"divergence too large at t={self.t}: div u={du:.3e}, div B={dB:.3e}"
            )

    def with_time(self, t: float) -> "State":
        return State(t, self.rho, self.u, self.B)
