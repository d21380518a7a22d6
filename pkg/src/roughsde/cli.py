"""Experiment runner.

Every subcommand reads a YAML config (unknown keys are rejected), accepts
``--seed``, ``--workers``, ``--out`` and ``--set key=value`` overrides, and
writes CSV outputs plus ``manifest.json`` into the output directory.  A
manifest is itself a valid ``--config``.

Exit codes: 0 pass, 1 experiment failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import math
import os
import sys
import time
from typing import Callable

import numpy as np
import yaml

from . import __version__
from .feynman_kac import PdeConfig, fk_compare
from .fields import DRIFT_REGISTRY, FIELD_REGISTRY, build_fields
from .girsanov import (
    SamplerError,
    blowup_experiment,
    euler_maruyama_ensemble,
    law_distance,
    weak_solution_sampler,
    weighted_expectation,
    write_ensemble_csv,
)
from .rde_solver import DivergenceError, SolverConfig, remainder_orders, solve_rde
from .rough_core import (
    GridPath,
    chen_defect_sweep,
    dyadic_triples,
    geometric_defect,
    lift_smooth_path,
    make_uniform_grid,
    time_augmented_lift,
)
from .stochastic_drivers import (
    JointLiftConfig,
    RngSpec,
    derive_seed,
    joint_lift,
    sample_brownian,
    sample_fbm,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


DRIVERS: dict[str, Callable[[float], np.ndarray]] = {
    "zero": lambda t: np.array([0.0]),
    "half_t": lambda t: np.array([0.5 * t]),
    "linear_t": lambda t: np.array([float(t)]),
    "sin2pi": lambda t: np.array([math.sin(2 * math.pi * t)]),
}

INITIAL_DATA: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "gauss": lambda x: np.exp(-np.asarray(x) ** 2),
    "lorentz": lambda x: 1.0 / (1.0 + np.asarray(x) ** 2),
}

_COMMON = {"seed": 20240601, "workers": 1, "out": "out"}

DEFAULTS: dict[str, dict] = {
    "lift-check": {
        **_COMMON,
        "n": 1024,
        "T": 1.0,
        "H": 0.45,
        "tolerance": 1e-10,
        "corrupt_pair": None,
        "corrupt_eps": 1e-6,
    },
    "blowup": {
        **_COMMON,
        "H": 0.3,
        "ps": [1.0, 2.0],
        "levels": [6, 7, 8, 9, 10, 11, 12],
        "T": 1.0,
        "method": "circulant",
    },
    "weak-sample": {
        **_COMMON,
        "x0": 0.0,
        "field": "one_plus_half_sin",
        "drift": "cos",
        "driver": "sin2pi",
        "n": 1024,
        "T": 1.0,
        "nu": 0.5,
        "n_samples": 100000,
        "convention": "ito",
        "ks_level": 0.01,
        "reference": True,
        "n_se": 3.0,
    },
    "fk": {
        **_COMMON,
        "field": "one_plus_half_sin",
        "drift": "cos",
        "driver": "sin2pi",
        "xi0": "lorentz",
        "probes": [[-1.0, 0.5], [0.0, 0.5], [0.3, 0.5], [1.0, 1.0], [-0.7, 1.0]],
        "a": -18.0,
        "b": 18.0,
        "dx": 0.02,
        "dt": 0.004,
        "nu": 0.5,
        "scheme": "implicit",
        "n_samples": 100000,
        "n_steps": 256,
        "method": "weak",
        "flip_advection": False,
        "n_se": 3.0,
    },
    "remainder": {
        **_COMMON,
        "field": "sin",
        "drift": "zero",
        "H": 0.4,
        "n": 4096,
        "T": 1.0,
        "x0": 0.3,
        "n_paths": 20,
        "substeps": 8,
        "levels": [3, 10],
        "statistic": "median",
        "threshold": 1.05,
        "min_pass": 18,
    },
}


# ---------------------------------------------------------------------------
# config handling


def _coerce(key, value, default):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            # YAML 1.1 reads exponent floats without a dot (1e-06) as strings
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        return value
    return value


def resolve_config(command: str, doc: dict | None, overrides: dict) -> dict:
    """Merge defaults, a config document and overrides; reject unknown keys."""
    cfg = copy.deepcopy(DEFAULTS[command])
    doc = dict(doc or {})
    if "command" in doc and "config" in doc:
        if doc["command"] != command:
            raise ConfigError(f"manifest is for {doc['command']!r}, not {command!r}")
        doc = dict(doc["config"])
    for source in (doc, overrides):
        for key, value in source.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            cfg[key] = _coerce(key, value, DEFAULTS[command][key])
    if not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    for key in ("field", "drift", "driver", "xi0"):
        if key in cfg:
            table = {"field": FIELD_REGISTRY, "drift": DRIFT_REGISTRY, "driver": DRIVERS, "xi0": INITIAL_DATA}[key]
            if cfg[key] not in table:
                raise ConfigError(f"{key}: unknown name {cfg[key]!r}; choose from {sorted(table)}")
    return cfg


def _rng(cfg, label: str) -> RngSpec:
    return RngSpec(derive_seed(cfg["seed"], label), 0)


def _write_manifest(out: str, command: str, cfg: dict, outputs: list[str], status: int, summary: dict):
    manifest = {
        "command": command,
        "config": cfg,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": outputs,
        "exit_code": status,
        "summary": summary,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _csv_rows(path: str, header: list[str], rows: list[list]):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


# ---------------------------------------------------------------------------
# experiments


def cmd_lift_check(cfg: dict, out: str) -> tuple[int, list[str], dict]:
    grid = make_uniform_grid(cfg["T"], cfg["n"])
    tol = cfg["tolerance"]
    rng = _rng(cfg, "lift-check")
    smooth_path = GridPath.from_function(
        lambda t: np.array([math.sin(2 * math.pi * t), math.cos(2 * math.pi * t)]), grid
    )
    smooth = lift_smooth_path(smooth_path)
    if cfg["corrupt_pair"] is not None:
        s, t = (int(i) for i in cfg["corrupt_pair"])
        if not 0 <= s < t <= grid.n:
            raise ConfigError("corrupt_pair must satisfy 0 <= s < t <= n")
        smooth = smooth.replace_second(smooth.second.with_corrupted_pair(s, t, cfg["corrupt_eps"]))
    H = cfg["H"]
    fbm = lift_smooth_path(sample_fbm(grid, H, rng.offset(0)), alpha=min(max(H - 0.01, 0.34), 0.5))
    B = sample_brownian(grid, 1, rng.offset(1))
    lifts = {
        "smooth": smooth,
        "time_augmented": time_augmented_lift(smooth),
        "fbm": fbm,
        "joint_ito": joint_lift(fbm, B, JointLiftConfig("ito")),
        "joint_stratonovich": joint_lift(fbm, B, JointLiftConfig("stratonovich")),
    }
    triples = dyadic_triples(grid.n)
    rows, failures = [], []
    for name, lift in lifts.items():
        worst, where = chen_defect_sweep(lift, triples)
        rows.append(["chen", name, worst, tol, worst <= tol, *where])
        if worst > tol:
            failures.append(f"chen defect {worst:.3e} on {name} at triple (s, theta, t) = {where}")
    for name in ("smooth", "fbm", "joint_stratonovich"):
        worst, where = geometric_defect(lifts[name])
        rows.append(["geometric", name, worst, tol, worst <= tol, where[0], "", where[1]])
        if worst > tol:
            failures.append(f"geometric defect {worst:.3e} on {name} at pair {where}")
    # integration by parts across the Brownian and driver blocks
    jl = lifts["joint_ito"]
    v = jl.first.values
    worst, where = 0.0, (0, 0)
    for s in range(grid.n):
        A = jl.second.row(s)[1:]
        d = v[s + 1 :] - v[s]
        err = np.abs(A[:, 0, 1] + A[:, 1, 0] - d[:, 0] * d[:, 1])
        k = int(np.argmax(err))
        if err[k] > worst:
            worst, where = float(err[k]), (s, s + 1 + k)
    rows.append(["parts", "joint_ito", worst, tol, worst <= tol, where[0], "", where[1]])
    if worst > tol:
        failures.append(f"parts defect {worst:.3e} at pair {where}")
    path = os.path.join(out, "lift_check.csv")
    _csv_rows(path, ["check", "lift", "max_defect", "tolerance", "pass", "s", "theta", "t"], rows)
    for f in failures:
        print(f"FAIL {f}", file=sys.stderr)
    return (EXIT_FAIL if failures else EXIT_PASS), [path], {"failures": failures}


def cmd_blowup(cfg: dict, out: str) -> tuple[int, list[str], dict]:
    table = blowup_experiment(cfg["H"], cfg["ps"], cfg["levels"], _rng(cfg, "blowup"), cfg["T"], cfg["method"])
    path = os.path.join(out, "blowup.csv")
    table.to_csv(path)
    ok = True
    notes = []
    for j, p in enumerate(table.ps):
        col = table.log_moments[:, j]
        if p == 1.0 and not np.all(col == 0.0):
            ok = False
            notes.append("p = 1 column is not identically 1")
        if p > 1.0 and not np.all(np.diff(col) > 0):
            ok = False
            notes.append(f"p = {p:g} column is not strictly increasing")
    return (EXIT_PASS if ok else EXIT_FAIL), [path], {"notes": notes}


def cmd_weak_sample(cfg: dict, out: str) -> tuple[int, list[str], dict]:
    fields = build_fields(cfg["field"], cfg["drift"])
    grid = make_uniform_grid(cfg["T"], cfg["n"])
    Z = GridPath.from_function(DRIVERS[cfg["driver"]], grid)
    zlift = lift_smooth_path(Z)
    N = cfg["n_samples"]
    weak = weak_solution_sampler(
        [cfg["x0"]], fields, zlift, N, _rng(cfg, "weak-sample/weak"),
        nu=cfg["nu"], convention=cfg["convention"], workers=cfg["workers"],
    )
    outputs = [os.path.join(out, "weak_ensemble.csv")]
    write_ensemble_csv(weak, outputs[0])
    wmean, wse = weighted_expectation(weak, lambda p: np.ones(p.shape[0]))
    n_se = cfg["n_se"]
    ok = abs(wmean - 1.0) <= n_se * wse
    rows = [["weight_mean", "", wmean, 1.0, wmean - 1.0, wse, abs(wmean - 1.0) <= n_se * wse]]
    summary = {"weight_mean": wmean, "weight_se": wse}
    if cfg["reference"]:
        ref = euler_maruyama_ensemble(
            [cfg["x0"]], fields, Z, N, _rng(cfg, "weak-sample/reference"), nu=cfg["nu"], workers=cfg["workers"]
        )
        outputs.append(os.path.join(out, "reference_ensemble.csv"))
        write_ensemble_csv(ref, outputs[1])
        rep = law_distance(weak, ref, level=cfg["ks_level"])
        for k in range(4):
            wk, _ = weighted_expectation(weak, lambda p, k=k: p[:, -1, 0] ** (k + 1))
            rk, _ = weighted_expectation(ref, lambda p, k=k: p[:, -1, 0] ** (k + 1))
            passed = abs(rep.moment_gaps[k]) <= n_se * rep.combined_se[k]
            rows.append([f"moment_{k + 1}", k + 1, wk, rk, rep.moment_gaps[k], rep.combined_se[k], passed])
        rows.append(["ks", "", rep.ks, rep.ks_critical, rep.ks - rep.ks_critical, "", rep.ks_passed])
        ok = ok and rep.moments_agree(2, n_se)
        summary.update(ks=rep.ks, ks_critical=rep.ks_critical)
    path = os.path.join(out, "law_report.csv")
    _csv_rows(path, ["quantity", "order", "weak", "reference", "gap", "se", "pass"], rows)
    outputs.append(path)
    return (EXIT_PASS if ok else EXIT_FAIL), outputs, summary


def cmd_fk(cfg: dict, out: str) -> tuple[int, list[str], dict]:
    fields = build_fields(cfg["field"], cfg["drift"])
    probes = [(float(x), float(t)) for x, t in cfg["probes"]]
    T = max(t for _, t in probes)
    pde = PdeConfig(cfg["a"], cfg["b"], cfg["dx"], cfg["dt"], T, INITIAL_DATA[cfg["xi0"]], cfg["nu"], cfg["scheme"])
    pde_fields = None
    if cfg["flip_advection"]:
        pde_fields = fields.negated()
    rep = fk_compare(
        probes, pde, fields, DRIVERS[cfg["driver"]], cfg["n_samples"], _rng(cfg, "fk"),
        n_steps=cfg["n_steps"], method=cfg["method"], pde_fields=pde_fields, n_se=cfg["n_se"],
        workers=cfg["workers"],
    )
    path = os.path.join(out, "fk.csv")
    rep.to_csv(path)
    return (EXIT_PASS if rep.passed else EXIT_FAIL), [path], {"boundary_ok": rep.boundary_ok}


def cmd_remainder(cfg: dict, out: str) -> tuple[int, list[str], dict]:
    fields = build_fields(cfg["field"], cfg["drift"])
    grid = make_uniform_grid(cfg["T"], cfg["n"])
    H = cfg["H"]
    alpha = min(max(H - 0.01, 0.34), 0.5)
    levels = None if cfg["levels"] is None else range(int(cfg["levels"][0]), int(cfg["levels"][1]) + 1)
    rng = _rng(cfg, "remainder")
    solver = SolverConfig(substeps=cfg["substeps"])
    rows, n_pass = [], 0
    for i in range(cfg["n_paths"]):
        lift = lift_smooth_path(sample_fbm(grid, H, rng.offset(i)), alpha=alpha)
        X = solve_rde([cfg["x0"]], lift, fields, solver)
        rep = remainder_orders(X, lift, fields, levels, cfg["threshold"], statistic=cfg["statistic"])
        est = rep.estimate
        rows.append([i, rep.slope, "" if est is None else est.intercept, rep.max_remainder, rep.exact, rep.passed])
        n_pass += rep.passed
    path = os.path.join(out, "remainder.csv")
    _csv_rows(path, ["path", "slope", "intercept", "max_remainder", "exact", "pass"], rows)
    ok = n_pass >= cfg["min_pass"]
    return (EXIT_PASS if ok else EXIT_FAIL), [path], {"passed_paths": n_pass, "n_paths": cfg["n_paths"]}


COMMANDS = {
    "lift-check": cmd_lift_check,
    "blowup": cmd_blowup,
    "weak-sample": cmd_weak_sample,
    "fk": cmd_fk,
    "remainder": cmd_remainder,
}


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key] = yaml.safe_load(raw)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughsde", description="Rough-path numerical experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="YAML config or a previous manifest.json")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--workers", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    try:
        doc = None
        if args.config:
            with open(args.config) as fh:
                doc = yaml.safe_load(fh)
            if doc is not None and not isinstance(doc, dict):
                raise ConfigError("config must be a mapping")
        overrides = _parse_set(args.set)
        for key in ("seed", "workers", "out"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = resolve_config(args.command, doc, overrides)
    except (OSError, yaml.YAMLError, ConfigError) as exc:
        print(f"roughsde {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    start = time.perf_counter()
    try:
        status, outputs, summary = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"roughsde {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, SamplerError, FloatingPointError) as exc:
        print(f"roughsde {args.command}: experiment failed: {exc}", file=sys.stderr)
        status, outputs, summary = EXIT_FAIL, [], {"error": str(exc)}
    summary = dict(summary, seconds=round(time.perf_counter() - start, 3))
    _write_manifest(out, args.command, cfg, [os.path.basename(p) for p in outputs], status, summary)
    print(f"{args.command}: {'PASS' if status == EXIT_PASS else 'FAIL'} ({out})")
    return status


if __name__ == "__main__":
    sys.exit(main())
