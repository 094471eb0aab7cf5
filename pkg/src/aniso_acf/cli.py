"""``aniso-acf`` command line.

    aniso-acf <command> --config FILE.json [--out DIR] [--seed N] [--formats csv,json,svg]

Exit status: 0 success, 2 usage error, 3 numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .core import AnisotropyMatrix, as_spd, reduce_pair
from .errors import ConvergenceError, HypothesisViolation, QuadratureError
from .functional import acf_profile, monotonicity_report
from .grid import Grid, SampledField
from .io import Plot, ReportBundle, Series, Table, emit_bundle, json_text
from .segregation import beta_sweep, default_lv_spec, default_variational_spec, solve_lv, solve_variational
from .spectral import nu_2d, nu_upper_nd, rayleigh_band_terms, sl_band_eigen
from .witness import normalized_fields, normalized_matrix, witness_2d, witness_3d, witness_report

COMMANDS = ("nu", "sl", "acf", "witness", "simulate", "sweep")
FORMATS = ("csv", "json", "svg")
TOP_KEYS = {"command", "params", "output_dir", "seed", "formats"}

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# command -> allowed params with defaults (None = required or derived)
PARAMS = {
    "nu": {"matrix": None, "partner": None, "search": 48, "n": 1024, "cap_search": True},
    "sl": {"rho": [0.999], "m": [0.51], "n": 4096},
    "acf": {
        "pair": "x1-split", "matrix": None, "dim": 2, "h": 1 / 128, "exponent": 4.0,
        "radii": {"start": 0.2, "stop": 0.8, "count": 13}, "tol": 0.05,
    },
    "witness": {"dim": 2, "phi1": None, "phi2": None, "alpha": None, "beta": None, "b": None, "h": None,
                "radii": {"start": 0.2, "stop": 0.6, "count": 9}, "acf": True, "export_fields": False},
    "simulate": {"kind": "lotka-volterra", "n": 129, "a2": 4.0, "beta": 1000.0, "rate": 150.0},
    "sweep": {"kind": "lotka-volterra", "n": 129, "a2": 4.0, "betas": [10.0, 100.0, 1000.0, 10000.0],
              "alphas": None, "rate": 150.0, "sample_pairs": 100000},
}


class ConfigError(ValueError):
    """Malformed or unsupported configuration (exit status 2)."""


@dataclass
class RunConfig:
    command: str
    params: dict
    output_dir: str = "aniso_acf_out"
    seed: int = 42
    formats: tuple = FORMATS


def _usage_commands():
    return "commands: " + ", ".join(COMMANDS)


def parse_config(source, command: str | None = None) -> RunConfig:
    """Validate a config given as a dict, inline JSON text or a file path.

    Unknown keys are rejected; defaults are filled in so the echoed params
    are complete.
    """
    if isinstance(source, dict):
        raw = source
    else:
        text = source
        if not str(source).lstrip().startswith("{"):
            try:
                with open(source, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {source!r}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cmd = raw.get("command", command)
    if command is not None and cmd != command:
        raise ConfigError(f"config command {cmd!r} disagrees with command line {command!r}")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; {_usage_commands()}")
    params = raw.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    allowed = PARAMS[cmd]
    bad = set(params) - set(allowed)
    if bad:
        raise ConfigError(f"unknown params for {cmd!r}: {sorted(bad)}; allowed: {sorted(allowed)}")
    full = {k: params.get(k, v) for k, v in allowed.items()}
    seed = raw.get("seed", 42)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit non-negative integer")
    formats = raw.get("formats", list(FORMATS))
    if isinstance(formats, str):
        formats = [f for f in formats.split(",") if f]
    if not set(formats) <= set(FORMATS):
        raise ConfigError(f"formats must be a subset of {list(FORMATS)}")
    out = raw.get("output_dir", "aniso_acf_out")
    return RunConfig(cmd, full, str(out), int(seed), tuple(sorted(set(formats))))


def _radii(spec):
    if isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "count"}
        if extra:
            raise ConfigError(f"unknown radii keys {sorted(extra)}")
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["count"]))
    return np.asarray(spec, dtype=float)


def _aniso(matrix, dim):
    if matrix is None:
        return AnisotropyMatrix.identity(dim)
    m = np.asarray(matrix, dtype=float)
    if m.ndim == 1:
        return AnisotropyMatrix.from_unsorted(tuple(m))
    A, _ = reduce_pair(m, np.eye(m.shape[0]))
    return A


def _partition_row(label, res):
    return [label, res.nu, res.lambda_u, res.lambda_v, json.dumps(res.domain_u.as_dict(), sort_keys=True),
            json.dumps(res.domain_v.as_dict(), sort_keys=True), res.certified]


def _run_nu(p, seed):
    if p["matrix"] is None:
        raise ConfigError("nu needs params.matrix")
    A1 = as_spd(p["matrix"])
    A2 = as_spd(p["partner"]) if p["partner"] is not None else as_spd(np.eye(A1.dim))
    rows = []
    docs = {}
    for label, (X, Y) in (("forward", (A1, A2)), ("reverse", (A2, A1))):
        A, amap = reduce_pair(X.entries, Y.entries)
        if A.dim == 2:
            res = nu_2d(A, search=int(p["search"]), n=int(p["n"]))
        elif A.dim == 3:
            res = nu_upper_nd(A, cap_search=bool(p["cap_search"]), n=int(p["n"]))
        else:
            raise ConfigError("matrices must be 2x2 or 3x3")
        rows.append(_partition_row(label, res))
        docs[label] = {"normalized_diag": list(A.diag), "nu": res.nu, "lambda_u": res.lambda_u,
                       "lambda_v": res.lambda_v, "domain_u": res.domain_u.as_dict(),
                       "domain_v": res.domain_v.as_dict(), "certified": res.certified, "extra": res.extra}
    docs["nu_pair"] = min(r[1] for r in rows)
    table = Table(["ordering", "nu", "lambda_u", "lambda_v", "domain_u", "domain_v", "certified"], rows)
    return {"partition": table}, {"partition": docs}, {}


def _run_sl(p, seed):
    rows = []
    for rho in np.atleast_1d(p["rho"]):
        for m in np.atleast_1d(p["m"]):
            eig = sl_band_eigen(float(rho), float(m), int(p["n"]))
            first, second, bound = rayleigh_band_terms(float(rho), float(m))
            rows.append([float(rho), float(m), eig.lam, eig.residual, bound, first, second, eig.lam <= bound])
    table = Table(["rho", "m", "lambda", "residual", "rayleigh_bound", "first_integral", "second_integral",
                   "below_bound"], rows)
    return {"band_eigen": table}, {}, {}


def pair_fixture(name: str, dim: int, h: float, params: dict | None = None):
    """Built-in ``(A, u, v)`` triples; ``x1-split`` is ``(x1^+, x1^-)``."""
    if name == "x1-split":
        grid = Grid.centered(0.92, h, dim)
        u = SampledField.from_function(grid, lambda x: np.maximum(x[..., 0], 0.0))
        v = SampledField.from_function(grid, lambda x: np.maximum(-x[..., 0], 0.0))
        return None, u, v
    if name in ("witness-2d", "witness-3d"):
        wit = witness_2d() if name == "witness-2d" else witness_3d()
        grid = Grid.centered(0.7, h, wit.dim)
        A, _ = normalized_matrix(wit)
        u, v = normalized_fields(wit, grid)
        return A, u, v
    raise ConfigError(f"unknown pair fixture {name!r}; known: x1-split, witness-2d, witness-3d")


def _run_acf(p, seed):
    dim = int(p["dim"])
    A_fix, u, v = pair_fixture(p["pair"], dim, float(p["h"]))
    A = A_fix if A_fix is not None else _aniso(p["matrix"], u.dim)
    radii = _radii(p["radii"])
    prof = acf_profile(A, u, v, np.zeros(u.dim), float(p["exponent"]), radii)
    rep = monotonicity_report(prof, float(p["tol"]))
    table = Table(["r", "I_A_u", "I_Id_v", "J"], [list(r) for r in zip(prof.radii, prof.i_left, prof.i_right, prof.j)])
    doc = {"verdict": rep.verdict, "passed": rep.passed, "slope_min": prof.slope_min, "drift": prof.drift,
           "tol": rep.tol, "worst_index": rep.worst_index, "worst_violation": rep.worst_violation,
           "matrix_diag": list(A.diag), "exponent": prof.exponent}
    plot = Plot("J(r)", "r", "J", [Series("J", list(prof.radii), list(prof.j))])
    return {"profile": table}, {"verdict": doc}, {"profile": plot}


def _run_witness(p, seed):
    dim = int(p["dim"])
    if dim == 2:
        kw = {k: float(p[k]) for k in ("phi1", "phi2", "b") if p[k] is not None}
        wit = witness_2d(**kw)
        h = float(p["h"]) if p["h"] is not None else 1 / 128
    elif dim == 3:
        kw = {k: float(p[k]) for k in ("alpha", "beta", "b") if p[k] is not None}
        wit = witness_3d(**kw)
        h = float(p["h"]) if p["h"] is not None else 1 / 64
    else:
        raise ConfigError("witness dim must be 2 or 3")
    radii = _radii(p["radii"])
    rep = witness_report(wit, radii=radii, h=h, acf=bool(p["acf"]))
    doc = rep.as_dict()
    doc["parameters"] = {k: getattr(wit, k) for k in (("phi1", "phi2", "b") if dim == 2 else ("alpha", "beta", "b", "lam", "mu"))}
    tables, plots = {}, {}
    if rep.profile is not None:
        prof = rep.profile
        tables["profile"] = Table(["r", "I_A_u", "I_Id_v", "J"],
                                  [list(r) for r in zip(prof.radii, prof.i_left, prof.i_right, prof.j)])
        plots["profile"] = Plot("witness J(r)", "r", "J", [Series("J", list(prof.radii), list(prof.j))])
    if p["export_fields"]:
        grid = Grid.centered(0.7, h, dim)
        u, v = normalized_fields(wit, grid)
        tables["fields"] = _field_table([u, v])
    return tables, {"witness": doc}, plots


def _field_table(fields):
    grid = fields[0].grid
    pts = grid.points().reshape(-1, grid.dim)
    cols = [f.values.reshape(-1) for f in fields]
    header = ["index"] + [f"x{d + 1}" for d in range(grid.dim)] + [f"u{i + 1}" for i in range(len(fields))]
    rows = [[i, *pts[i], *(c[i] for c in cols)] for i in range(len(pts))]
    return Table(header, rows)


def _spec(p):
    if p["kind"] == "lotka-volterra":
        return default_lv_spec(int(p["n"]), float(p["a2"]))
    if p["kind"] == "variational":
        return default_variational_spec(int(p["n"]), float(p["a2"]), float(p["rate"]))
    raise ConfigError("kind must be 'lotka-volterra' or 'variational'")


def _run_simulate(p, seed):
    spec = _spec(p)
    beta = float(p["beta"])
    res = solve_lv(spec, beta) if spec.kind == "lotka-volterra" else solve_variational(spec, beta)
    doc = {"beta": res.beta, "iterations": res.iterations, "residual": res.residual, "energy": res.energy}
    return {"fields": _field_table(res.fields)}, {"simulation": doc}, {}


def _run_sweep(p, seed):
    from .spectral import nu_bar

    spec = _spec(p)
    alphas = p["alphas"]
    nb = None
    if alphas is None:
        nb = nu_bar([m.entries for m in spec.matrices])
        alphas = [0.25 * nb]
    rep = beta_sweep(spec, p["betas"], alphas, seed=seed, sample_pairs=int(p["sample_pairs"]))
    keys = sorted({k for row in rep.rows for k in row} - {"beta"})
    table = Table(["beta"] + keys, [[row["beta"]] + [row.get(k) for k in keys] for row in rep.rows])
    doc = {"betas": rep.betas, "alphas": list(alphas), "nu_bar": nb, "errors": {str(k): v for k, v in rep.errors.items()}}
    betas = [row["beta"] for row in rep.rows]
    overlap = [Series(k, betas, rep.column(k)) for k in keys if k.startswith("overlap_") or k.startswith("scaled_overlap_")]
    holder = [Series(k, betas, rep.column(k)) for k in keys if k.startswith("holder_")]
    plots = {
        "overlap": Plot("overlap vs beta", "beta", "overlap", overlap, logx=True, logy=True),
        "holder": Plot("Hoelder seminorm vs beta", "beta", "seminorm", holder, logx=True, logy=True),
    }
    if rep.errors:
        raise ConvergenceError(f"sweep stopped early: {rep.errors}")
    return {"sweep": table}, {"sweep": doc}, plots


RUNNERS = {"nu": _run_nu, "sl": _run_sl, "acf": _run_acf, "witness": _run_witness,
           "simulate": _run_simulate, "sweep": _run_sweep}


def run_command(config: RunConfig) -> ReportBundle:
    t0 = time.perf_counter()
    tables, docs, plots = RUNNERS[config.command](config.params, config.seed)
    bundle = ReportBundle(config.command, config.params, config.seed, tables, docs, plots)
    bundle.wall_time = time.perf_counter() - t0
    return bundle


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json_text({"error": kind, "message": str(exc), "exit_status": code}))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aniso-acf", description="Anisotropic ACF monotonicity laboratory.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON file or inline JSON object")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (default 42)")
    ap.add_argument("--formats", help="comma-separated subset of csv,json,svg")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = {"command": args.command}
        if args.config:
            cfg = parse_config(args.config, args.command)
            raw.update({"params": cfg.params, "seed": cfg.seed, "formats": list(cfg.formats), "output_dir": cfg.output_dir})
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.formats is not None:
            raw["formats"] = args.formats
        if args.out is not None:
            raw["output_dir"] = args.out
        config = parse_config(raw, args.command)
    except ConfigError as exc:
        return _error("usage", exc, EXIT_USAGE)
    try:
        bundle = run_command(config)
    except ConfigError as exc:
        return _error("usage", exc, EXIT_USAGE)
    except (ConvergenceError, QuadratureError, HypothesisViolation, ValueError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        return _error("numerical", exc, EXIT_NUMERIC)
    try:
        emit_bundle(bundle, config.output_dir, config.formats)
    except OSError as exc:
        return _error("io", exc, EXIT_IO)
    print(os.path.join(config.output_dir, "manifest.json"))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
