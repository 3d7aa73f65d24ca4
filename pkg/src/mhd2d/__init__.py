"""Pseudo-spectral simulator for 2D nonhomogeneous incompressible MHD with
vacuum, plus a harness that evaluates the a priori estimates on its output."""

from .fields import Grid, ScalarField, VectorField2
from .series import EstimateSeries, Trajectory
from .solver import RunResult, Scenario, SolverConfig, run, step
from .state import State

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField2",
    "State",
    "Scenario",
    "SolverConfig",
    "RunResult",
    "run",
    "step",
    "EstimateSeries",
    "Trajectory",
]
