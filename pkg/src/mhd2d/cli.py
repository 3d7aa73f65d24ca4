"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 solver abort.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import snapshot
from .estimates import (
    EstimateError,
    energy_identity_defect,
    gronwall_envelope,
    phi,
    psi,
    serrin_integral,
)
from .fields import Grid, ScalarField, grad_norm_l2, norm_lp, norm_sobolev
from .littlewood_paley import (
    ZeroBandError,
    bernstein_ratio,
    build_partition,
    delta_q,
    kappa,
    log_sobolev_ratio,
    optimal_band_count,
    time_integrated_ratio,
)
from .series import COLUMNS, EstimateSeries, SeriesFormatError
from .solver import SCENARIOS, Scenario, SolverConfig, run, step_count
from .verify import SUITES, Params, RunAborted, SuiteError, run_suite

log = logging.getLogger("mhd2d")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ABORT = 0, 1, 2, 3
FAILED_MARKER = "FAILED"


class ConfigError(ValueError):
    """The config file is unreadable or invalid."""


@dataclass(frozen=True)
class RunConfig:
    dt: float
    t_end: float
    scenario: str
    grid_n: int = 64
    seed: int = 0
    eps_rel: float = 1e-6
    snapshot_every: int = 100
    output_dir: str = "output"

    def params(self) -> Params:
        return Params(self.grid_n, self.dt, self.t_end, self.scenario, self.seed, self.eps_rel)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str}
_REQUIRED = ("dt", "t_end", "scenario")


def _cast(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return _CASTS[kind](raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind}") from None


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys fail."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}; valid: {', '.join(_TYPES)}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _cast(key, raw)
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; valid: {', '.join(SCENARIOS)}")
    try:
        Grid(cfg.grid_n)
    except ValueError as exc:
        raise ConfigError(f"grid_n: {exc}") from None
    if not (math.isfinite(cfg.dt) and cfg.dt > 0):
        raise ConfigError("dt must be positive")
    if not (math.isfinite(cfg.t_end) and cfg.t_end >= 0):
        raise ConfigError("t_end must be >= 0")
    if not 0 < cfg.eps_rel < 1:
        raise ConfigError("eps_rel must lie in (0, 1)")
    if cfg.snapshot_every < 1:
        raise ConfigError("snapshot_every must be >= 1")
    try:
        step_count(cfg.t_end, cfg.dt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


# ----------------------------------------------------------------- run


def _fmt(x: float) -> str:
    return f"{x:.17g}" if math.isfinite(x) else "nan"


def _summary(cfg: RunConfig, res) -> list[tuple[str, float | str]]:
    traj = res.trajectory
    T = float(traj.times[-1])
    series = res.series
    rows: list[tuple[str, float | str]] = [
        ("scenario", cfg.scenario),
        ("grid_n", cfg.grid_n),
        ("dt", repr(cfg.dt)),
        ("t_end", _fmt(T)),
        ("steps", res.steps),
        ("phi", _fmt(phi(traj, T))),
        ("psi", _fmt(psi(traj, T))),
        ("serrin_inf_2", _fmt(serrin_integral(traj, math.inf, 2.0))),
    ]
    try:
        defect = float(energy_identity_defect(series).relative[-1])
    except EstimateError:
        defect = math.nan
    rows.append(("energy_defect_rel", _fmt(defect)))
    rows.append(("gronwall_c_fit", _fmt(gronwall_envelope(traj, float(traj.times[0])).c_fit)))
    rows.append(("vacuum_floor_activations", res.floor_activations))
    rows.append(("cfl_warnings", res.cfl_warnings))
    rows.append(("projection_iterations", res.pressure_iterations))
    rows.append(("momentum_iterations", res.momentum_iterations))
    s0, s1 = traj.states[0], res.final_state
    u0 = norm_lp(s0.u, 2)
    rows.append(("u_L2_ratio", _fmt(norm_lp(s1.u, 2) / u0 if u0 > 0 else math.nan)))
    if cfg.scenario == "taylor_green":
        ratio = norm_lp(s1.u, 2) / u0
        exact = math.exp(-2 * s1.t)
        rows.append(("decay_exact", _fmt(exact)))
        rows.append(("decay_rel_error", _fmt(abs(ratio / exact - 1))))
    return rows


def cmd_run(config_path) -> int:
    cfg = load_config(config_path)
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output_dir: {exc}") from None
    (out / FAILED_MARKER).unlink(missing_ok=True)
    for old in out.glob("snap_*.mhd2"):
        old.unlink()

    def save(index, state):
        snapshot.write_state(out / snapshot.snapshot_name(index), state)

    res = run(
        Scenario(cfg.scenario, n=cfg.grid_n, seed=cfg.seed),
        SolverConfig(dt=cfg.dt, eps_rel=cfg.eps_rel),
        cfg.t_end,
        cfg.snapshot_every,
        on_snapshot=save,
    )
    res.series.to_csv(out / "series.csv")
    lines = [f"{k} = {v}" for k, v in _summary(cfg, res)]
    if res.failed:
        lines.append(f"error = {res.error}")
        (out / FAILED_MARKER).write_text(res.error + "\n")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_ABORT if res.failed else EXIT_OK


# -------------------------------------------------------------- verify


def cmd_verify(suite: str, config_path) -> int:
    if suite not in SUITES:
        raise SuiteError(f"unknown suite {suite!r}; valid: {', '.join(SUITES)}")
    cfg = load_config(config_path)
    results = run_suite(suite, cfg.params())
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ------------------------------------------------------------------ lp


def _lp_rows(name: str, f: ScalarField, part, q: float):
    rows = []
    for k in part.band_indices:
        band = delta_q(f, part, k)
        rows.append((name, "band_L2", k, norm_lp(band, 2)))
        rows.append((name, "band_Linf", k, norm_lp(band, math.inf)))
        try:
            rows.append((name, "bernstein_p2", k, bernstein_ratio(f, part, k, 2.0)))
        except ZeroBandError:
            rows.append((name, "bernstein_p2", k, "degenerate"))
    try:
        rows.append((name, "log_sobolev_ratio", q, log_sobolev_ratio(f, q)))
    except ZeroBandError:
        rows.append((name, "log_sobolev_ratio", q, "degenerate"))
    w1q = norm_sobolev(f, 1, q)
    grad = grad_norm_l2(f)
    if w1q > 0 and grad > 0:
        rows.append((name, "optimal_N", q, optimal_band_count(w1q, grad, q)))
    else:
        rows.append((name, "optimal_N", q, "degenerate"))
    return rows


def _write_bands(path: Path, f: ScalarField, part, t: float) -> None:
    bands = {f"band_q{k}": delta_q(f, part, k).values for k in part.band_indices}
    snapshot.write_fields(path, f.grid.n, t, bands)


def cmd_lp(input_path, q_min: int, q_max: int, q: float, output=None) -> int:
    try:
        kappa(q)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    src = Path(input_path)
    files = sorted(src.glob("*.mhd2")) if src.is_dir() else [src]
    if not files:
        raise snapshot.SnapshotError(f"no snapshots in {src}")
    loaded = [snapshot.read_fields(p) for p in files]
    n = loaded[0][0]
    if any(entry[0] != n for entry in loaded):
        raise snapshot.SnapshotError("snapshots have different grid sizes")
    loaded.sort(key=lambda entry: entry[1])
    grid = Grid(n)
    try:
        part = build_partition(grid, q_min, q_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out_dir = Path(output) if output else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for (_, t, flds), path in zip(loaded, files):
        for name, values in flds.items():
            f = ScalarField(grid, values)
            rows += [(f"{path.stem}:{name}",) + r[1:] for r in _lp_rows(name, f, part, q)]
            if out_dir:
                _write_bands(out_dir / f"{path.stem}_{name}_bands.mhd2", f, part, t)
    if len(loaded) > 1:
        times = [entry[1] for entry in loaded]
        for name in loaded[0][2]:
            if all(name in entry[2] for entry in loaded):
                series = [(t, ScalarField(grid, flds[name])) for _, t, flds in loaded]
                rows.append((f"window:{name}", "time_integrated_ratio", q,
                             time_integrated_ratio(series, times[0], times[-1], q)))
    lines = ["source,quantity,index,value"]
    for src_name, qty, idx, val in rows:
        text = val if isinstance(val, str) else (str(val) if isinstance(val, int) else _fmt(val))
        lines.append(f"{src_name},{qty},{idx:g},{text}")
    csv_text = "\n".join(lines) + "\n"
    if out_dir:
        (out_dir / "lp.csv").write_text(csv_text)
    sys.stdout.write(csv_text)
    return EXIT_OK


# -------------------------------------------------------------- report

PHI_COLUMNS = ("u_H2", "B_H2", "u_H3", "B_H3", "sqrt_rho_ut_L2", "Bt_L2")


def _trend(v: np.ndarray) -> str:
    if len(v) < 2:
        return "n/a"
    d = np.diff(v)
    if np.all(d >= 0):
        return "nondecreasing"
    if np.all(d <= 0):
        return "nonincreasing"
    return "mixed"


def cmd_report(series_path) -> int:
    s = EstimateSeries.from_csv(series_path)
    head = f"{'column':<16}{'min':>14}{'max':>14}{'final':>14}{'final/initial':>15}  trend"
    print(head)
    print("-" * len(head))
    for c in COLUMNS:
        v = s[c]
        if len(v):
            lo, hi, last = (f"{x:14.6e}" for x in (v.min(), v.max(), v[-1]))
            ratio = f"{v[-1] / v[0]:15.6e}" if v[0] != 0 else f"{'nan':>15}"
        else:
            lo = hi = last = f"{'nan':>14}"
            ratio = f"{'nan':>15}"
        trend = _trend(v) if c in PHI_COLUMNS else ""
        print(f"{c:<16}{lo}{hi}{last}{ratio}  {trend}".rstrip())
    print(f"rows = {len(s)}")
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mhd2d", description="2D nonhomogeneous MHD simulator and estimate harness")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="integrate a scenario")
    p.add_argument("--config", required=True)
    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("--suite", required=True, help=", ".join(SUITES))
    p.add_argument("--config", required=True)
    p = sub.add_parser("lp", help="Littlewood-Paley analysis of snapshots")
    p.add_argument("--input", required=True, help="snapshot file or directory")
    p.add_argument("--qmin", type=int, required=True)
    p.add_argument("--qmax", type=int, required=True)
    p.add_argument("--q", type=float, required=True, help="Sobolev exponent, > 2")
    p.add_argument("--output", help="directory for band snapshots and lp.csv")
    p = sub.add_parser("report", help="summarize a series CSV")
    p.add_argument("--series", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            return cmd_run(args.config)
        if args.command == "verify":
            return cmd_verify(args.suite, args.config)
        if args.command == "lp":
            return cmd_lp(args.input, args.qmin, args.qmax, args.q, args.output)
        return cmd_report(args.series)
    except (ConfigError, SuiteError, SeriesFormatError, snapshot.SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
