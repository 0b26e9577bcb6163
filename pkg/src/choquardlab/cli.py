"""Batch front-end: config-driven solve / sweep / verify / multibump runs.

Config files are sectioned key-value text ([problem], [grid], [solver],
[potential], plus subcommand extras); command-line --set overrides beat
file keys.  Result files are deterministic for a fixed config and seed:
JSON is dumped with sorted keys and wall-clock metadata goes to a separate
.meta.json.  Exit codes: 0 success, 2 solver non-convergence, 3 config
error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time

import numpy as np

from .functionals import Problem
from .grid import Grid, export_slice_csv, save_field
from .multibump import (
    BasinSolveError,
    BasinSpec,
    default_basins,
    gaussian_bumps_potential,
    level_hierarchy,
    multiplicity_run,
    table_potential_1d,
)
from .sharp_constants import ConstantsCache, default_cache_path, gn_constant, hls_constant
from .solver import SolverConfig, minimize, report_to_dict
from .thresholds import (
    classify,
    critical_compatibility_value,
    critical_manifold_minimizer,
    ground_level_bound,
    multiplier_lower_bound,
    sweep,
    verify_pohozaev_emptiness,
)

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_CONFIG = 3

_SCHEMA = {
    "problem": {"dim", "alpha", "gamma", "mu", "q", "c"},
    "grid": {"points_per_axis", "half_width"},
    "solver": {"max_iters", "step_init", "backtrack_factor", "armijo_c",
               "grad_tol", "rearrange_every", "seed", "boundary_tol", "max_regrids"},
    "potential": {"kind", "centers", "widths", "h_max", "h_inf", "epsilon",
                  "rho_tilde", "r_tilde", "file", "hierarchy"},
    "sweep": {"mu_min", "mu_max", "mu_count", "c_min", "c_max", "c_count",
              "solve_every"},
    "verify": {"trials", "rng_seed", "descent_probe", "delta"},
    "output": {"output_dir", "format"},
}


class ConfigError(Exception):
    pass


def _fail(message: str) -> int:
    print(f"config error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def load_config(path: str, overrides) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cfg: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        cfg[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            cfg[section][key] = value
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got '{item}'")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override target '{target}'")
        cfg.setdefault(section, {})[key] = value
    return cfg


def _floats(cfg: dict, section: str, keys) -> dict:
    out = {}
    for key in keys:
        if key in cfg.get(section, {}):
            try:
                out[key] = float(cfg[section][key])
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} must be a number") from exc
    return out


def build_problem(cfg: dict) -> Problem:
    sec = cfg.get("problem")
    if not sec:
        raise ConfigError("missing [problem] section")
    needed = {"dim", "alpha", "gamma", "mu", "q", "c"}
    missing = needed - set(sec)
    if missing:
        raise ConfigError(f"[problem] missing keys: {sorted(missing)}")
    vals = _floats(cfg, "problem", needed)
    try:
        return Problem(dim=int(vals["dim"]), alpha=vals["alpha"], gamma=vals["gamma"],
                       mu=vals["mu"], q=vals["q"], c=vals["c"])
    except ValueError as exc:
        raise ConfigError(f"incompatible problem parameters: {exc}") from exc


def build_grid(cfg: dict, dim: int) -> Grid:
    sec = cfg.get("grid")
    if not sec:
        raise ConfigError("missing [grid] section")
    missing = {"points_per_axis", "half_width"} - set(sec)
    if missing:
        raise ConfigError(f"[grid] missing keys: {sorted(missing)}")
    try:
        return Grid(dim, int(sec["points_per_axis"]), float(sec["half_width"]))
    except ValueError as exc:
        raise ConfigError(f"incompatible grid parameters: {exc}") from exc


def build_solver_config(cfg: dict, seed_override=None) -> SolverConfig:
    sec = cfg.get("solver", {})
    kwargs = {}
    for key in ("step_init", "backtrack_factor", "armijo_c", "grad_tol", "boundary_tol"):
        if key in sec:
            kwargs[key] = float(sec[key])
    for key in ("max_iters", "rearrange_every", "seed", "max_regrids"):
        if key in sec:
            kwargs[key] = int(sec[key])
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"incompatible solver parameters: {exc}") from exc


def _parse_points(text: str, dim: int) -> np.ndarray:
    points = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        comps = [float(v) for v in chunk.split(",")]
        if len(comps) != dim:
            raise ConfigError(f"each center needs {dim} component(s), got '{chunk}'")
        points.append(comps)
    if not points:
        raise ConfigError("no centers given")
    return np.asarray(points)


def build_potential(cfg: dict, dim: int):
    sec = cfg.get("potential")
    if not sec:
        raise ConfigError("missing [potential] section")
    kind = sec.get("kind", "gaussian-bumps")
    try:
        if kind == "gaussian-bumps":
            needed = {"centers", "widths", "h_max", "h_inf", "epsilon"}
            missing = needed - set(sec)
            if missing:
                raise ConfigError(f"[potential] missing keys: {sorted(missing)}")
            centers = _parse_points(sec["centers"], dim)
            widths = [float(v) for v in sec["widths"].split(",")]
            pot = gaussian_bumps_potential(centers, widths, float(sec["h_max"]),
                                           float(sec["h_inf"]), float(sec["epsilon"]))
        elif kind == "table":
            needed = {"file", "h_max", "h_inf", "epsilon", "centers"}
            missing = needed - set(sec)
            if missing:
                raise ConfigError(f"[potential] missing keys: {sorted(missing)}")
            if dim != 1:
                raise ConfigError("table potentials are 1D only")
            data = np.loadtxt(sec["file"], delimiter=",", skiprows=1)
            pot = table_potential_1d(data[:, 0], data[:, 1], float(sec["h_max"]),
                                     float(sec["h_inf"]), _parse_points(sec["centers"], dim),
                                     float(sec["epsilon"]))
        else:
            raise ConfigError(f"unknown potential kind '{kind}'")
    except (ValueError, OSError) as exc:
        raise ConfigError(f"incompatible potential parameters: {exc}") from exc
    if "rho_tilde" in sec or "r_tilde" in sec:
        if not {"rho_tilde", "r_tilde"} <= set(sec):
            raise ConfigError("give both rho_tilde and r_tilde or neither")
        basins = BasinSpec(float(sec["rho_tilde"]), float(sec["r_tilde"]))
        basins.validate(pot)
    else:
        basins = default_basins(pot)
    return pot, basins


def _resolve_output(cfg: dict, args) -> tuple:
    out_dir = args.output_dir or cfg.get("output", {}).get("output_dir")
    if not out_dir:
        raise ConfigError("no output directory (give --output-dir or [output] output_dir)")
    fmt = args.format or cfg.get("output", {}).get("format", "both")
    if fmt not in ("csv", "json", "both"):
        raise ConfigError(f"unknown format '{fmt}'")
    os.makedirs(out_dir, exist_ok=True)
    return out_dir, fmt


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_meta(path: str, started: float) -> None:
    _write_json(path, {"started_unix": started, "elapsed_seconds": time.time() - started,
                       "tool": "choquard"})


def _cache_from(args) -> ConstantsCache:
    return ConstantsCache(args.cache or default_cache_path())


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    started = time.time()
    cfg = load_config(args.config, args.set)
    prob = build_problem(cfg)
    grid = build_grid(cfg, prob.dim)
    solver_cfg = build_solver_config(cfg, args.seed)
    out_dir, fmt = _resolve_output(cfg, args)
    cache = _cache_from(args)

    report = minimize(prob, grid, solver_cfg)
    hls = hls_constant(prob.dim, prob.alpha, cache=cache)
    payload = report_to_dict(report)
    payload["bound_sigma"] = ground_level_bound(prob, hls)
    payload["bound_lambda"] = multiplier_lower_bound(prob, hls)
    payload["config"] = cfg
    if fmt in ("json", "both"):
        _write_json(os.path.join(out_dir, "solve_report.json"), payload)
    if fmt in ("csv", "both"):
        export_slice_csv(report.minimizer, os.path.join(out_dir, "minimizer_slice.csv"))
    save_field(report.minimizer, os.path.join(out_dir, "minimizer.field"))
    _write_meta(os.path.join(out_dir, "solve_report.meta.json"), started)
    status = "converged" if report.converged else "NOT CONVERGED"
    print(f"solve: sigma={report.energy.total:.8f} lambda={report.multiplier:.8f} "
          f"pohozaev={report.pohozaev:.3e} iters={report.iterations} [{status}]")
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def cmd_sweep(args) -> int:
    started = time.time()
    cfg = load_config(args.config, args.set)
    prob = build_problem(cfg)
    sec = cfg.get("sweep")
    if not sec:
        raise ConfigError("missing [sweep] section")
    missing = {"mu_min", "mu_max", "mu_count", "c_min", "c_max", "c_count"} - set(sec)
    if missing:
        raise ConfigError(f"[sweep] missing keys: {sorted(missing)}")
    mu_values = np.linspace(float(sec["mu_min"]), float(sec["mu_max"]), int(sec["mu_count"]))
    c_values = np.linspace(float(sec["c_min"]), float(sec["c_max"]), int(sec["c_count"]))
    solve_every = int(sec.get("solve_every", 4))
    out_dir, fmt = _resolve_output(cfg, args)
    cache = _cache_from(args)

    grid = build_grid(cfg, prob.dim) if "grid" in cfg else None
    solver_cfg = build_solver_config(cfg, args.seed) if "solver" in cfg else None
    sbar = gn_constant(prob.dim, prob.q_critical, cache=cache)
    hls = hls_constant(prob.dim, prob.alpha, cache=cache)
    table = sweep(prob, mu_values, c_values, sbar, grid=grid, cfg=solver_cfg,
                  solve_every=solve_every, hls_value=hls)
    comment = "config: " + json.dumps(cfg, sort_keys=True)
    if fmt in ("csv", "both"):
        table.to_csv(os.path.join(out_dir, "sweep.csv"), comment=comment)
        _write_gnuplot(os.path.join(out_dir, "sweep_plot.gp"))
    if fmt in ("json", "both"):
        payload = table.summary()
        payload["config"] = cfg
        _write_json(os.path.join(out_dir, "sweep_summary.json"), payload)
    _write_meta(os.path.join(out_dir, "sweep.meta.json"), started)
    summary = table.summary()
    print(f"sweep: {summary['points']} points, {summary['solved']} solved, "
          f"regimes {summary['regimes']}")
    return EXIT_OK


def _write_gnuplot(path: str) -> None:
    script = """# phase-diagram plot for sweep.csv (generated)
set datafile separator ','
set xlabel 'mu'
set ylabel 'c'
set key outside
plot 'sweep.csv' using 1:(strcol(3) eq 'critical_nonexistence' ? $2 : 1/0) \\
         with points pt 7 title 'nonexistence', \\
     'sweep.csv' using 1:(strcol(3) eq 'critical_open' ? $2 : 1/0) \\
         with points pt 6 title 'open', \\
     'sweep.csv' using 1:(strcol(3) eq 'subcritical_exists' ? $2 : 1/0) \\
         with points pt 4 title 'exists'
"""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(script)


def cmd_verify_critical(args) -> int:
    started = time.time()
    cfg = load_config(args.config, args.set)
    prob = build_problem(cfg)
    if not prob.is_mass_critical:
        raise ConfigError("verify-critical requires q = 2+4/N")
    out_dir, fmt = _resolve_output(cfg, args)
    cache = _cache_from(args)
    sec = cfg.get("verify", {})
    trials = int(sec.get("trials", 100))
    rng_seed = int(sec.get("rng_seed", args.seed if args.seed is not None else 0))
    probe = sec.get("descent_probe", "false").lower() in ("1", "true", "yes")

    sbar = gn_constant(prob.dim, prob.q_critical, cache=cache)
    point = classify(prob, sbar)
    payload: dict = {
        "regime": point.regime,
        "witness": point.witness,
        "sbar": sbar,
        "config": cfg,
    }
    if point.witness < 1.0:
        grid = build_grid(cfg, prob.dim)
        report = verify_pohozaev_emptiness(prob, grid, sbar, trials=trials,
                                           rng_seed=rng_seed, run_descent_probe=probe)
        payload["emptiness"] = {
            "trials": report.trials,
            "min_ratio": report.min_ratio,
            "required_ratio": report.required_ratio,
            "all_pass": report.all_pass,
            "probe_ran": report.probe_ran,
            "no_pohozaev_point_encountered": report.no_pohozaev_point_encountered,
        }
    rhs = critical_compatibility_value(prob.dim)
    lhs = prob.mu * prob.dim / (prob.dim + 2.0) * prob.c ** (4.0 / prob.dim)
    payload["compatibility"] = {"lhs": lhs, "rhs": rhs}
    if abs(lhs - rhs) <= 1e-8 * rhs and prob.dim == 1:
        delta = float(sec.get("delta", 0.05))
        hls = hls_constant(prob.dim, prob.alpha, cache=cache)
        bubble, level = critical_manifold_minimizer(prob, delta=delta, hls_value=hls)
        payload["manifold_extremal"] = {
            "energy": level,
            "bound": ground_level_bound(prob, hls),
        }
    if fmt in ("json", "both"):
        _write_json(os.path.join(out_dir, "verify_report.json"), payload)
    _write_meta(os.path.join(out_dir, "verify_report.meta.json"), started)
    print(f"verify-critical: regime={point.regime} witness={point.witness:.6f}")
    return EXIT_OK


def cmd_multibump(args) -> int:
    started = time.time()
    cfg = load_config(args.config, args.set)
    prob = build_problem(cfg)
    grid = build_grid(cfg, prob.dim)
    solver_cfg = build_solver_config(cfg, args.seed)
    pot, basins = build_potential(cfg, prob.dim)
    out_dir, fmt = _resolve_output(cfg, args)
    want_hierarchy = cfg.get("potential", {}).get("hierarchy", "false").lower() \
        in ("1", "true", "yes")

    try:
        reports = multiplicity_run(prob, pot, basins, grid, solver_cfg)
    except BasinSolveError as exc:
        print(f"multibump failed: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    rows = [{
        "basin": r.basin_index,
        "energy": r.energy,
        "lambda": r.multiplier,
        "barycenter": [float(v) for v in r.barycenter],
        "converged": bool(r.converged),
        "in_basin": bool(r.in_basin),
        "iterations": int(r.iterations),
        "basin_rejections": int(r.basin_rejections),
    } for r in reports]
    payload: dict = {"basins": rows, "config": cfg,
                     "rho_tilde": basins.rho_tilde, "r_tilde": basins.r_tilde}
    if want_hierarchy:
        hier = level_hierarchy(prob, pot, grid, solver_cfg)
        payload["hierarchy"] = {
            "level_hmax": hier.level_hmax,
            "level_hinf": hier.level_hinf,
            "global_estimate": hier.global_estimate,
            "ordering_ok": hier.ordering_ok,
        }
    if fmt in ("json", "both"):
        _write_json(os.path.join(out_dir, "multibump.json"), payload)
    if fmt in ("csv", "both"):
        with open(os.path.join(out_dir, "multibump.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["basin", "energy", "lambda", "barycenter", "converged"])
            for row in rows:
                writer.writerow([row["basin"], repr(row["energy"]), repr(row["lambda"]),
                                 " ".join(repr(v) for v in row["barycenter"]),
                                 str(row["converged"]).lower()])
    _write_meta(os.path.join(out_dir, "multibump.meta.json"), started)
    for row in rows:
        print(f"basin {row['basin']}: energy={row['energy']:.8f} "
              f"lambda={row['lambda']:.6f} barycenter={row['barycenter']}")
    return EXIT_OK


def cmd_constants(args) -> int:
    cache = _cache_from(args)
    if args.q is None and args.alpha is None:
        print("config error: constants needs --q and/or --alpha", file=sys.stderr)
        return EXIT_CONFIG
    if args.q is not None:
        value = gn_constant(args.N, args.q, cache=cache)
        print(f"gn_constant(N={args.N}, r={args.q}) = {value!r}")
    if args.alpha is not None:
        value = hls_constant(args.N, args.alpha, cache=cache)
        print(f"hls_constant(N={args.N}, alpha={args.alpha}) = {value!r}")
    print(f"cache: {cache.path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choquard",
        description="normalized-solution lab: constrained solves, phase sweeps, "
                    "critical-exponent verification, multibump runs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="sectioned key-value config file")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--format", default=None, choices=("csv", "json", "both"))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--cache", default=None, help="constants cache path "
                       "(default $CHOQUARD_CACHE or ~/.cache/choquardlab)")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config entry")

    for name, fn in (("solve", cmd_solve), ("sweep", cmd_sweep),
                     ("verify-critical", cmd_verify_critical),
                     ("multibump", cmd_multibump)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("constants")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--q", type=float, default=None, help="interpolation exponent r")
    p.add_argument("--alpha", type=float, default=None, help="Riesz order")
    p.add_argument("--cache", default=None)
    p.set_defaults(fn=cmd_constants)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        return _fail(str(exc))
    except FileNotFoundError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
