"""Command-line front end.

Subcommands:

    thermal-state   solve one thermal/GGE point and write its observables
    stroke          drive one adiabatic stroke and write the trajectory
    cycle           run a full four-stroke Otto cycle
    scan            skewed infinitesimal-cycle efficiencies on a (beta, chi) grid
    selftest        run the built-in oracle checks

Configuration comes from a YAML file (--config), overridden by --set
block.key=value flags and a few convenience flags.  The OTTOCYCLE_OUTDIR
environment variable overrides the output directory.  Exit codes: 0 success,
1 solver failure, 2 config error (no output is written on config errors).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np
import yaml

from .config import SCHEMA_VERSION, RunConfig, load_config_file, resolve_config
from .correlators import CorrelatorBundle
from .cycle import CycleConfig, grid_scan, run_cycle, skewed_efficiencies
from .errors import ConfigError, OttocycleError
from .grids import make_grid
from .models import Charge, build_kernels
from .strokes import ghd_stroke, thermal_stroke, work_along
from .tba import thermal_state


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    """Full round-trip text for one CSV field (17 significant digits)."""
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _outdir(cfg: RunConfig) -> str:
    return os.environ.get("OTTOCYCLE_OUTDIR", cfg.output["directory"])


def _write_json(cfg: RunConfig, suffix: str, payload: dict) -> str:
    path = os.path.join(_outdir(cfg), f"{cfg.output['basename']}-{suffix}.json")
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict()}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    return path


def _write_csv(cfg: RunConfig, suffix: str, rows) -> str:
    """Write rows (first row = header) with the resolved config as comments."""
    path = os.path.join(_outdir(cfg), f"{cfg.output['basename']}-{suffix}.csv")
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
        fh.write(f"# config: {json.dumps(cfg.to_dict(), separators=(',', ':'))}\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def _emit(cfg: RunConfig, suffix: str, payload: dict, tables: dict | None = None):
    """Write the requested formats; returns the list of paths written."""
    os.makedirs(_outdir(cfg), exist_ok=True)
    paths = []
    if "json" in cfg.output["formats"]:
        paths.append(_write_json(cfg, suffix, payload))
    if "csv" in cfg.output["formats"] and tables:
        for name, rows in tables.items():
            paths.append(_write_csv(cfg, f"{suffix}-{name}" if name else suffix,
                                    rows))
    return paths


def _task_value(cfg: RunConfig, key: str, cast=float, required=True,
                default=None):
    if key not in cfg.task or cfg.task[key] is None:
        if required:
            raise ConfigError(f"missing task.{key}")
        return default
    try:
        return cast(cfg.task[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad task.{key}: {cfg.task[key]!r}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_thermal_state(cfg: RunConfig) -> list[str]:
    beta = _task_value(cfg, "beta")
    target_m = _task_value(cfg, "target_m", required=False)
    model = cfg.build_model()
    grid = cfg.build_grid(model)
    pt = thermal_state(model, grid, beta, target_m)
    payload = {
        "observables": {"chi": pt.chi, "beta": pt.beta, "mu": pt.mu,
                        "u": pt.u, "m": pt.m, "s": pt.s},
        "state": pt.filling.to_dict(),
    }
    mids = grid.midpoints
    rows = [("string", "lambda", "theta", "rho")]
    for i, length in enumerate(model.strings.lengths):
        for j in range(grid.n_cells):
            rows.append((length, float(mids[j]), float(pt.filling.values[i, j]),
                         float(pt.rho.rho[i, j])))
    return _emit(cfg, "thermal-state", payload, {"": rows})


def cmd_stroke(cfg: RunConfig) -> list[str]:
    kind = str(cfg.task.get("kind", "thermal"))
    if kind not in ("thermal", "prethermal"):
        raise ConfigError(f"task.kind must be thermal or prethermal, got {kind!r}")
    beta = _task_value(cfg, "beta")
    target_m = _task_value(cfg, "target_m", required=False)
    chi_end = _task_value(cfg, "chi_end")

    model = cfg.build_model()
    grid = cfg.build_grid(model)
    start = thermal_state(model, grid, beta, target_m)
    n_steps = int(cfg.numerics["n_steps"])
    if kind == "thermal":
        traj = thermal_stroke(model, grid, start, chi_end, n_steps)
    else:
        traj = ghd_stroke(model, grid, start.filling, chi_end, n_steps,
                          bootstrap_substeps=int(cfg.numerics["bootstrap_substeps"]))
    rows = [("chi", "u", "m", "s", "entropy_defect")]
    for i in range(traj.chis.size):
        rows.append((float(traj.chis[i]), float(traj.u[i]), float(traj.m[i]),
                     float(traj.s[i]), float(traj.s[i] - traj.s[0])))
    payload = {
        "stroke": {"kind": kind, "chi_start": model.chi, "chi_end": chi_end,
                   "work_extracted": work_along(traj),
                   "entropy_defect": float(traj.s[-1] - traj.s[0]),
                   "n_steps": n_steps},
    }
    return _emit(cfg, "stroke", payload, {"trajectory": rows})


def _traj_rows(traj):
    rows = [("chi", "u", "m", "s")]
    for i in range(traj.chis.size):
        rows.append((float(traj.chis[i]), float(traj.u[i]),
                     float(traj.m[i]), float(traj.s[i])))
    return rows


def cmd_cycle(cfg: RunConfig) -> list[str]:
    cycle_cfg = CycleConfig(
        chi_lo=_task_value(cfg, "chi_lo"),
        chi_hi=_task_value(cfg, "chi_hi"),
        beta_cold=_task_value(cfg, "beta_cold"),
        beta_hot=_task_value(cfg, "beta_hot"),
        target_m=_task_value(cfg, "target_m", required=False),
        n_steps=int(cfg.numerics["n_steps"]),
        medium=str(cfg.task.get("medium", "both")),
        distance_stride=_task_value(cfg, "distance_stride", cast=int,
                                    required=False, default=10),
        bootstrap_substeps=int(cfg.numerics["bootstrap_substeps"]),
    )
    model = cfg.build_model()
    grid = cfg.build_grid(model)
    result = run_cycle(model, grid, cycle_cfg)

    tables = {}
    for name, med in result.media.items():
        for leg, traj in (("AB", med.adiabat_ab), ("CD", med.adiabat_cd)):
            if traj is not None:
                tables[f"{name}-energy-{leg}"] = _traj_rows(traj)
        for leg, curve in (("AB", med.distance_ab), ("CD", med.distance_cd)):
            if curve is not None:
                rows = [("chi", "distance")]
                rows += [(float(c), float(v))
                         for c, v in zip(curve.chis, curve.values)]
                tables[f"{name}-distance-{leg}"] = rows
    return _emit(cfg, "cycle", {"result": result.to_dict()}, tables)


def _axis(cfg: RunConfig, key: str) -> np.ndarray:
    """Task axis spec: either an explicit list or [start, stop, num]."""
    spec = cfg.task.get(key)
    if spec is None:
        raise ConfigError(f"missing task.{key}")
    if isinstance(spec, dict):
        try:
            return np.linspace(float(spec["start"]), float(spec["stop"]),
                               int(spec["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad task.{key}: {spec!r}") from exc
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ConfigError(f"task.{key} must be a list or start/stop/num mapping")
    return np.asarray([float(x) for x in spec])


def cmd_scan(cfg: RunConfig, workers: int | None) -> list[str]:
    betas = _axis(cfg, "betas")
    chis = _axis(cfg, "chis")
    delta_chi = _task_value(cfg, "delta_chi")
    delta_beta = _task_value(cfg, "delta_beta")
    target_m = _task_value(cfg, "target_m", required=False)
    if workers is None:
        workers = os.cpu_count() or 1
    model = cfg.build_model()
    report = grid_scan(model, int(cfg.numerics["grid_n"]), betas, chis,
                       delta_chi, delta_beta, target_m, workers=workers)
    n_fail = sum(p.failed for p in report.points)
    payload = {
        "scan": {"delta_chi": delta_chi, "delta_beta": delta_beta,
                 "target_m": target_m, "n_points": len(report.points),
                 "n_failed": n_fail},
    }
    return _emit(cfg, "scan", payload, {"ratio": list(report.csv_rows())})


# ---------------------------------------------------------------------------
# selftest: compact oracle checks
# ---------------------------------------------------------------------------

def _selftest_checks():
    from scipy.integrate import quad

    from .models import IsingModel, XXZModel

    def ising_free_energy_oracle():
        # quadrature over the exact single-particle dispersion
        beta, h = 1.3, 0.7
        model = IsingModel(h)
        grid = make_grid(256, model.domain)
        pt = thermal_state(model, grid, beta)
        val = quad(lambda k: math.log(1.0 + math.exp(-beta * model.energy(k))),
                   -math.pi, math.pi, limit=200)[0] / (2.0 * math.pi)
        return abs((pt.s - beta * pt.u) - val), 1e-8

    def ising_infinite_t_entropy():
        model = IsingModel(1.0)
        grid = make_grid(128, model.domain)
        pt = thermal_state(model, grid, 0.0)
        return abs(pt.s - math.log(2.0)), 1e-10

    def xxz_magnetization_round_trip():
        model = XXZModel(2.0, n_strings=8)
        grid = make_grid(64, model.domain)
        pt = thermal_state(model, grid, 1.0, target_m=0.45)
        return abs(pt.m - 0.45), 1e-8

    def ising_stroke_invariance():
        model = IsingModel(0.5)
        grid = make_grid(64, model.domain)
        pt = thermal_state(model, grid, 1.0)
        traj = ghd_stroke(model, grid, pt.filling, 0.8, 20)
        return float(np.max(np.abs(traj.final_filling.values
                                   - pt.filling.values))), 1e-14

    def skewed_sign():
        model = XXZModel(2.0, n_strings=8)
        grid = make_grid(64, model.domain)
        kern = build_kernels(model, grid, need_dchi=True)
        pt = thermal_state(model, grid, -1.0, target_m=0.45, kernels=kern)
        rep = skewed_efficiencies(model, pt, 1e-3, 0.1, kernels=kern)
        ok = rep.ratio > 1.0  # prethermal wins at negative temperature
        return (0.0 if ok else 1.0), 0.5

    return [
        ("ising free energy vs quadrature", ising_free_energy_oracle),
        ("ising infinite-T entropy = ln 2", ising_infinite_t_entropy),
        ("xxz magnetization round trip", xxz_magnetization_round_trip),
        ("ising prethermal filling frozen", ising_stroke_invariance),
        ("negative-T skewed ratio > 1", skewed_sign),
    ]


def cmd_selftest() -> int:
    failures = 0
    for name, check in _selftest_checks():
        try:
            err, tol = check()
            ok = err <= tol
        except Exception as exc:  # report, keep going
            print(f"FAIL {name}: {exc}")
            failures += 1
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name} (err={err:.3e}, tol={tol:g})")
        failures += 0 if ok else 1
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_set(values) -> dict:
    overrides = {}
    for item in values or []:
        if "=" not in item:
            raise ConfigError(f"--set expects block.key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key.strip()] = yaml.safe_load(raw)
    return overrides


def _add_common(parser):
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key (dotted path)")
    parser.add_argument("--outdir", help="output directory")
    parser.add_argument("--basename", help="output file basename")
    parser.add_argument("--format", action="append", choices=("json", "csv"),
                        help="output format (repeatable)")
    parser.add_argument("--grid-n", type=int, help="rapidity cells")
    parser.add_argument("--n-steps", type=int, help="stroke steps")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ottocycle",
        description="Quasi-static quantum Otto cycles in integrable spin chains.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thermal-state", help="solve one thermal/GGE point")
    _add_common(p)
    p.add_argument("--beta", type=float)
    p.add_argument("--target-m", type=float)

    p = sub.add_parser("stroke", help="drive one adiabatic stroke")
    _add_common(p)
    p.add_argument("--kind", choices=("thermal", "prethermal"))
    p.add_argument("--beta", type=float)
    p.add_argument("--target-m", type=float)
    p.add_argument("--chi-end", type=float)

    p = sub.add_parser("cycle", help="run a four-stroke Otto cycle")
    _add_common(p)
    p.add_argument("--chi-lo", type=float)
    p.add_argument("--chi-hi", type=float)
    p.add_argument("--beta-cold", type=float)
    p.add_argument("--beta-hot", type=float)
    p.add_argument("--target-m", type=float)
    p.add_argument("--medium", choices=("thermal", "prethermal", "both"))

    p = sub.add_parser("scan", help="skewed-cycle scan over (beta, chi)")
    _add_common(p)
    p.add_argument("--workers", type=int,
                   help="worker processes (default: available parallelism)")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return parser


_FLAG_MAP = {
    "outdir": "output.directory",
    "basename": "output.basename",
    "grid_n": "numerics.grid_n",
    "n_steps": "numerics.n_steps",
    "beta": "task.beta",
    "target_m": "task.target_m",
    "kind": "task.kind",
    "chi_end": "task.chi_end",
    "chi_lo": "task.chi_lo",
    "chi_hi": "task.chi_hi",
    "beta_cold": "task.beta_cold",
    "beta_hot": "task.beta_hot",
    "medium": "task.medium",
}


def _config_from_args(args) -> RunConfig:
    data = load_config_file(args.config) if args.config else {}
    overrides = _parse_set(getattr(args, "set", None))
    for attr, dotted in _FLAG_MAP.items():
        val = getattr(args, attr, None)
        if val is not None:
            overrides[dotted] = val
    if getattr(args, "format", None):
        overrides["output.formats"] = list(args.format)
    return resolve_config(data, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "selftest":
        return cmd_selftest()
    try:
        cfg = _config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "thermal-state":
            paths = cmd_thermal_state(cfg)
        elif args.command == "stroke":
            paths = cmd_stroke(cfg)
        elif args.command == "cycle":
            paths = cmd_cycle(cfg)
        else:
            paths = cmd_scan(cfg, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OttocycleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
