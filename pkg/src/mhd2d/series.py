"""Per-step estimate columns and stored trajectories."""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .fields import TWO_PI, VectorField2, irfft2, rfft2
from .state import State

COLUMNS = (
    "t",
    "e_kin",
    "e_mag",
    "diss_u",
    "diss_B",
    "rho_min",
    "rho_max",
    "rho_mass",
    "u_L2",
    "u_Linf",
    "B_Linf",
    "u_H1",
    "B_H1",
    "u_H2",
    "B_H2",
    "u_H3",
    "B_H3",
    "sqrt_rho_ut_L2",
    "Bt_L2",
    "div_u_max",
    "div_B_max",
)


class SeriesFormatError(ValueError):
    """A CSV does not match the estimate-series layout."""


@dataclass(frozen=True)
class EstimateSeries:
    """Named columns over step times, all of equal length."""

    columns: dict

    def __post_init__(self):
        if tuple(self.columns) != COLUMNS:
            raise ValueError("columns must be exactly the documented estimate columns, in order")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError("columns differ in length")
        for name, v in self.columns.items():
            arr = np.asarray(v, dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"column {name} has non-finite entries")
            arr.flags.writeable = False
            self.columns[name] = arr

    @classmethod
    def empty(cls) -> "EstimateSeries":
        return cls({c: np.zeros(0) for c in COLUMNS})

    def __len__(self) -> int:
        return len(self.columns["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def to_csv(self, path=None) -> str:
        """Render (and optionally write) the CSV; floats carry 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        cols = [self.columns[c] for c in COLUMNS]
        for i in range(len(self)):
            w.writerow([f"{col[i]:.17g}" for col in cols])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "EstimateSeries":
        text = Path(path).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise SeriesFormatError("empty file: missing header")
        header = tuple(h.strip() for h in rows[0])
        if header != COLUMNS:
            raise SeriesFormatError(f"unexpected header {','.join(header)}")
        data = {c: [] for c in COLUMNS}
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != len(COLUMNS):
                raise SeriesFormatError(
                    f"line {lineno}: {len(row)} fields, expected {len(COLUMNS)}"
                )
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise SeriesFormatError(f"line {lineno}: {exc}") from exc
            for c, v in zip(COLUMNS, vals):
                data[c].append(v)
        try:
            return cls({c: np.array(v, dtype=float) for c, v in data.items()})
        except ValueError as exc:
            raise SeriesFormatError(str(exc)) from exc


# ------------------------------------------------------------------ norms


def _power_sums(comps, sp) -> dict:
    """Spectral sums of ``(1+|k|^2)^s |c_k|^2`` for s = 0..3 and the Dirichlet sum."""
    power = sum(sp.power(rfft2(c)) for c in comps)
    w = 1.0 + sp.k2_full
    out = {s: float(np.sum(w**s * power)) for s in (0, 1, 2, 3)}
    out["grad"] = float(np.sum(sp.k2 * power))
    return out


def _div_max(v: VectorField2) -> float:
    sp = v.grid.spectral
    hat = rfft2(v.stack())
    div = irfft2(sp.ikx * hat[0] + sp.iky * hat[1], v.grid.n)
    return float(np.max(np.abs(div)))


def state_norms(state: State) -> dict:
    """Every column that does not involve a time derivative."""
    grid = state.grid
    sp = grid.spectral
    dA = grid.cell_area
    rho = state.rho.values
    u = state.u.stack()
    B = state.B.stack()
    u2 = u[0] ** 2 + u[1] ** 2
    B2 = B[0] ** 2 + B[1] ** 2
    pu = _power_sums(u, sp)
    pB = _power_sums(B, sp)
    c2 = TWO_PI**2
    return {
        "t": float(state.t),
        "e_kin": 0.5 * float(np.sum(rho * u2)) * dA,
        "e_mag": 0.5 * float(np.sum(B2)) * dA,
        "diss_u": c2 * pu["grad"],
        "diss_B": c2 * pB["grad"],
        "rho_min": float(rho.min()),
        "rho_max": float(rho.max()),
        "rho_mass": float(np.sum(rho)) * dA,
        "u_L2": math.sqrt(float(np.sum(u2)) * dA),
        "u_Linf": math.sqrt(float(u2.max())),
        "B_Linf": math.sqrt(float(B2.max())),
        "u_H1": TWO_PI * math.sqrt(pu[1]),
        "B_H1": TWO_PI * math.sqrt(pB[1]),
        "u_H2": TWO_PI * math.sqrt(pu[2]),
        "B_H2": TWO_PI * math.sqrt(pB[2]),
        "u_H3": TWO_PI * math.sqrt(pu[3]),
        "B_H3": TWO_PI * math.sqrt(pB[3]),
        "div_u_max": _div_max(state.u),
        "div_B_max": _div_max(state.B),
    }


# ------------------------------------------------------- time derivatives


def derivative_stencil(i: int, count: int) -> list:
    """``(index, weight)`` pairs for d/dt at sample ``i`` of ``count`` (unit spacing).

    Centered in the interior; second-order one-sided at the ends; plain
    differences when only two samples exist.
    """
    if count < 2:
        raise ValueError("a time derivative needs at least two samples")
    if not 0 <= i < count:
        raise IndexError(i)
    if count == 2:
        return [(0, -1.0), (1, 1.0)]
    if i == 0:
        return [(0, -1.5), (1, 2.0), (2, -0.5)]
    if i == count - 1:
        return [(i - 2, 0.5), (i - 1, -2.0), (i, 1.5)]
    return [(i - 1, -0.5), (i + 1, 0.5)]


def _combine(arrays, stencil, offset: int, dt: float) -> np.ndarray:
    return sum(w * arrays[j - offset] for j, w in stencil) / dt


def _derivative_norms(rho: np.ndarray, ut: np.ndarray, Bt: np.ndarray, dA: float):
    ut2 = ut[0] ** 2 + ut[1] ** 2
    Bt2 = Bt[0] ** 2 + Bt[1] ** 2
    return (
        math.sqrt(float(np.sum(np.maximum(rho, 0.0) * ut2)) * dA),
        math.sqrt(float(np.sum(Bt2)) * dA),
    )


class SeriesBuilder:
    """Streams states into an :class:`EstimateSeries` with a rolling window.

    A single pushed state yields an empty series: time derivatives are
    undefined without a second sample.
    """

    def __init__(self, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.dt = dt
        self._rows: list[dict] = []
        self._window: deque = deque(maxlen=3)
        self._first: list = []

    def push(self, state: State) -> None:
        self._rows.append(state_norms(state))
        item = (state.rho.values, state.u.stack(), state.B.stack())
        self._window.append(item)
        if len(self._first) < 3:
            self._first.append(item)
        k = len(self._rows)
        if k >= 3:
            # centered derivative for the middle of the window
            self._fill(k - 2, list(self._window), k - 3, k)

    def _fill(self, i: int, items, offset: int, count: int) -> None:
        st = derivative_stencil(i, count)
        ut = _combine([it[1] for it in items], st, offset, self.dt)
        Bt = _combine([it[2] for it in items], st, offset, self.dt)
        a, b = _derivative_norms(items[i - offset][0], ut, Bt, self._cell_area)
        self._rows[i]["sqrt_rho_ut_L2"] = a
        self._rows[i]["Bt_L2"] = b

    @property
    def _cell_area(self) -> float:
        n = self._window[0][0].shape[0]
        return (TWO_PI / n) ** 2

    def finish(self) -> EstimateSeries:
        k = len(self._rows)
        if k < 2:
            return EstimateSeries.empty()
        self._fill(0, self._first, 0, k)
        self._fill(k - 1, list(self._window), k - len(self._window), k)
        return EstimateSeries({c: np.array([r[c] for r in self._rows]) for c in COLUMNS})


def build_series(states, dt: float) -> EstimateSeries:
    b = SeriesBuilder(dt)
    for s in states:
        b.push(s)
    return b.finish()


@dataclass(frozen=True)
class Trajectory:
    """Snapshots at a uniform cadence ``dt_snapshot``."""

    states: tuple
    dt_snapshot: float

    def __post_init__(self):
        if not self.states:
            raise ValueError("a trajectory needs at least one state")
        if not self.dt_snapshot > 0:
            raise ValueError("dt_snapshot must be positive")
        object.__setattr__(self, "states", tuple(self.states))
        t = np.array([s.t for s in self.states])
        if len(t) > 1:
            gaps = np.diff(t)
            if np.any(gaps <= 0):
                raise ValueError("time stamps must increase strictly")
            if np.max(np.abs(gaps - self.dt_snapshot)) > 1e-9 * max(1.0, float(t[-1])):
                raise ValueError("snapshots are not uniformly spaced at dt_snapshot")

    def __len__(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @cached_property
    def series(self) -> EstimateSeries:
        return build_series(self.states, self.dt_snapshot)

    def time_derivatives(self, i: int) -> tuple[VectorField2, VectorField2]:
        """``(u_t, B_t)`` at snapshot ``i`` from the derivative stencil."""
        st = derivative_stencil(i, len(self.states))
        grid = self.states[0].grid
        ut = sum(w * self.states[j].u.stack() for j, w in st) / self.dt_snapshot
        Bt = sum(w * self.states[j].B.stack() for j, w in st) / self.dt_snapshot
        return (
            VectorField2.from_arrays(grid, ut[0], ut[1]),
            VectorField2.from_arrays(grid, Bt[0], Bt[1]),
        )

    @cached_property
    def profile(self) -> dict:
        """Per-snapshot arrays used by the blow-up functionals.

        Keys are the estimate columns without time derivatives, plus squared
        norms ``rho_H2``, ``sqrt_rho_ut_L2``, ``Bt_L2``, ``ut_H1`` and
        ``Bt_H1``.  Derivative entries are zero for a single snapshot.
        """
        rows = [state_norms(s) for s in self.states]
        out = {c: np.array([r[c] for r in rows]) for c in rows[0]}
        grid = self.states[0].grid
        sp = grid.spectral
        w1 = 1.0 + sp.k2_full
        c2 = TWO_PI**2
        out["rho_H2"] = np.array(
            [c2 * float(np.sum(w1**2 * sp.power(rfft2(s.rho.values)))) for s in self.states]
        )
        count = len(self.states)
        names = ("sqrt_rho_ut_L2", "Bt_L2", "ut_H1", "Bt_H1")
        if count < 2:
            for k in names:
                out[k] = np.zeros(1)
            return out
        u_hat = [rfft2(s.u.stack()) for s in self.states]
        B_hat = [rfft2(s.B.stack()) for s in self.states]
        vals = {k: np.empty(count) for k in names}
        for i in range(count):
            st = derivative_stencil(i, count)
            ut_hat = sum(w * u_hat[j] for j, w in st) / self.dt_snapshot
            Bt_hat = sum(w * B_hat[j] for j, w in st) / self.dt_snapshot
            ut = irfft2(ut_hat, grid.n)
            rho = np.maximum(self.states[i].rho.values, 0.0)
            vals["sqrt_rho_ut_L2"][i] = float(np.sum(rho * (ut[0] ** 2 + ut[1] ** 2))) * grid.cell_area
            pu = sp.power(ut_hat[0]) + sp.power(ut_hat[1])
            pB = sp.power(Bt_hat[0]) + sp.power(Bt_hat[1])
            vals["Bt_L2"][i] = c2 * float(np.sum(pB))
            vals["ut_H1"][i] = c2 * float(np.sum(w1 * pu))
            vals["Bt_H1"][i] = c2 * float(np.sum(w1 * pB))
        out.update(vals)
        return out
