"""``mconf`` command-line entry point.

Every command writes its outputs into ``--out`` (created if missing).  Point
clouds go to CSV (one row per candidate, ``c0..`` coordinates plus an
``in_set`` flag), reports to JSON with sorted keys, so two runs with the same
seed and inputs produce byte-identical files.

Exit codes: 0 success, 2 validation error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .conformal import write_points_csv

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 2, 3

WIND_HEADER = ["timestamp", "theta1", "r1", "theta2", "r2"]
SIMPLEX_HEADER = ["p1", "p2", "p3", "label", "x1", "x2", "x3", "x4", "x5"]
SIMPLEX_TOL = 1e-6

# per-command defaults; None means "use the library default"
DEFAULTS = {
    "simulate-sphere": {"n": 400, "alpha": 0.1, "h": 0.5, "x": 0.0},
    "simulate-stiefel": {"n": 500, "alpha": 0.05, "h": 1.0, "x": 0.1},
    "wind": {"alpha": 0.2, "h": 0.4, "query": "2.3,5.1", "truth": "2.4,6.6"},
    "simplex": {"alpha": None, "h": None, "query": "84,45,66,150,65", "n_bins": 4},
    "coverage": {"n": 400, "alpha": 0.1, "h": 0.5, "reps": 100},
}
COMMON = {"seed": 1, "n_mc": 100000, "n_grid": 10000, "out": "mconf-out"}

INT_KEYS = {"n", "seed", "n_mc", "n_grid", "reps", "n_bins", "n_test"}
FLOAT_KEYS = {"alpha", "h", "x"}


class ValidationError(Exception):
    pass


# --------------------------------------------------------------------------
# configuration


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` comments allowed, no sections."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror}") from e
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as e:
        raise ValidationError(f"bad config file {path}: {e}") from e
    return {k.replace("-", "_"): v for k, v in parser["run"].items()}


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{key}: expected a number, got {value!r}") from None
    return value


def _pair(key: str, text: str, size: int) -> tuple:
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ValidationError(f"{key}: expected {size} comma-separated numbers") from None
    if len(vals) != size:
        raise ValidationError(f"{key}: expected {size} values, got {len(vals)}")
    return vals


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    if args.config:
        cfg.update(read_config(args.config))
    for key, val in vars(args).items():
        if key not in ("command", "config", "func") and val is not None:
            cfg[key] = val
    cfg = {k: _coerce(k, v) for k, v in cfg.items()}
    a = cfg.get("alpha")
    if a is not None and not 0 < a < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {a}")
    for key in ("n_mc", "n_grid", "n", "reps", "n_bins"):
        if key in cfg and cfg[key] is not None and cfg[key] < 1:
            raise ValidationError(f"{key} must be >= 1")
    if not -(2**63) <= cfg["seed"] < 2**64:
        raise ValidationError("seed must fit in 64 bits")
    h = cfg.get("h")
    if h is not None and not h > 0:
        raise ValidationError("h must be positive")
    return cfg


# --------------------------------------------------------------------------
# input files


def _open_rows(path, header: list[str]):
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror}") from e
    except UnicodeDecodeError:
        raise ValidationError(f"{path}: not UTF-8 text") from None
    if not rows:
        raise ValidationError(f"{path}: empty file")
    got = [c.strip() for c in rows[0]]
    if got != header:
        raise ValidationError(
            f"{path}: line 1: expected header {','.join(header)}, got {','.join(got)}"
        )
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if any(c.strip() for c in r)]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    return body


def _parse_floats(path, lineno: int, cells: list[str], names: list[str]) -> list[float]:
    out = []
    for name, c in zip(names, cells):
        try:
            v = float(c)
        except ValueError:
            raise ValidationError(
                f"{path}: line {lineno}: {name} is not a number: {c!r}"
            ) from None
        if not math.isfinite(v):
            raise ValidationError(f"{path}: line {lineno}: {name} is not finite")
        out.append(v)
    return out


def read_wind_csv(path) -> tuple[np.ndarray, ...]:
    """Columns ``timestamp,theta1,r1,theta2,r2`` (radians, m/s)."""
    vals = []
    for lineno, r in _open_rows(path, WIND_HEADER):
        if len(r) != len(WIND_HEADER):
            raise ValidationError(
                f"{path}: line {lineno}: expected {len(WIND_HEADER)} fields, got {len(r)}"
            )
        vals.append(_parse_floats(path, lineno, r[1:], WIND_HEADER[1:]))
    a = np.array(vals)
    return a[:, 0], a[:, 1], a[:, 2], a[:, 3]


def read_simplex_csv(path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Columns ``p1,p2,p3,label,x1..x5``.

    Probability rows must lie on the simplex within 1e-6; they are then
    clipped at zero and renormalized.
    """
    probs, xs, labels = [], [], []
    for lineno, r in _open_rows(path, SIMPLEX_HEADER):
        if len(r) != len(SIMPLEX_HEADER):
            raise ValidationError(
                f"{path}: line {lineno}: expected {len(SIMPLEX_HEADER)} fields, got {len(r)}"
            )
        p = _parse_floats(path, lineno, r[:3], SIMPLEX_HEADER[:3])
        if min(p) < -SIMPLEX_TOL or abs(sum(p) - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"{path}: line {lineno}: probabilities off the simplex")
        probs.append(p)
        labels.append(r[3].strip())
        xs.append(_parse_floats(path, lineno, r[4:], SIMPLEX_HEADER[4:]))
    p = np.clip(np.array(probs), 0.0, None)
    return p / p.sum(axis=1, keepdims=True), np.array(xs), labels


# --------------------------------------------------------------------------
# outputs


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=1, sort_keys=True, default=_json_default)
        f.write("\n")


def _recorded(cfg) -> dict:
    """Config as stored in reports; the output location is left out so that
    runs into different directories stay byte-identical."""
    return {k: v for k, v in cfg.items() if k != "out"}


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e.strerror}") from e
    return out


# --------------------------------------------------------------------------
# commands


def cmd_simulate_sphere(cfg) -> dict:
    model = ex.SphereRegressionModel(n=cfg["n"], h=cfg["h"])
    run = ex.sphere_run(
        cfg["seed"], model, cfg["alpha"], cfg["x"], cfg["n_grid"], cfg["n_mc"]
    )
    out = _outdir(cfg)
    run["set"].write_csv(out / "set.csv")
    write_points_csv(out / "oracle.csv", run["oracle_points"])
    cov = run["coverage"].to_dict()
    write_json(out / "coverage.json", cov)
    summary = {
        "command": "simulate-sphere",
        "config": _recorded(cfg),
        "set_fraction": run["set"].fraction,
        "oracle_cap_cosine": ex.vmf_cap_cosine(model.kappa, cfg["alpha"]),
        **{k: float(v) for k, v in run["comparison"].items()},
    }
    write_json(out / "summary.json", summary)
    return {"coverage": cov["overall"], "sym_diff": summary["sym_diff"]}


def cmd_simulate_stiefel(cfg) -> dict:
    model = ex.StiefelRegressionModel(n=cfg["n"], h=cfg["h"])
    run = ex.stiefel_run(cfg["seed"], model, cfg["alpha"], cfg["x"], cfg["n_grid"])
    out = _outdir(cfg)
    run["set"].write_csv(out / "set.csv")
    cov = run["coverage"].to_dict()
    write_json(out / "coverage.json", cov)
    write_json(out / "summary.json", {
        "command": "simulate-stiefel",
        "config": _recorded(cfg),
        "set_fraction": run["set"].fraction,
        "query_response": run["query_response"],
        "query_in_set": run["query_in_set"],
    })
    return {"coverage": cov["overall"], "set_fraction": run["set"].fraction}


def cmd_wind(cfg) -> dict:
    if not cfg.get("input"):
        raise ValidationError("wind needs --input CSV")
    cols = read_wind_csv(cfg["input"])
    truth = cfg.get("truth")
    run = ex.wind_run(
        *cols, seed=cfg["seed"], alpha=cfg["alpha"], h=cfg["h"],
        query=_pair("query", cfg["query"], 2),
        truth=None if truth in (None, "", "none") else _pair("truth", truth, 2),
        n_grid=cfg["n_grid"],
    )
    out = _outdir(cfg)
    run["set"].write_csv(out / "set.csv")
    cov = run["coverage"].to_dict()
    write_json(out / "coverage.json", cov)
    summary = {
        "command": "wind",
        "config": _recorded(cfg),
        "n_rows": run["n_rows"],
        "n_dropped": run["n_dropped"],
        "xi_intensity": run["xi_intensity"],
        "angular_correlation": run["angular_correlation"],
        "set_fraction": run["set"].fraction,
        "truth_in_set": run.get("truth_in_set"),
    }
    write_json(out / "summary.json", summary)
    return {"coverage": cov["overall"], "xi": run["xi_intensity"]}


def cmd_simplex(cfg) -> dict:
    if not cfg.get("input"):
        raise ValidationError("simplex needs --input CSV")
    probs, x, _ = read_simplex_csv(cfg["input"])
    alphas = (0.1, 0.05) if cfg["alpha"] is None else (cfg["alpha"],)
    try:
        run = ex.simplex_run(
            probs, x, cfg["seed"], alphas, _pair("query", cfg["query"], 5),
            cfg["n_bins"], cfg["h"], cfg["n_grid"], min(cfg["n_mc"], 20000),
        )
    except ValueError as e:
        raise ValidationError(str(e)) from None
    out = _outdir(cfg)
    bands = {}
    for a in alphas:
        run["sets"][a].write_csv(out / f"set_alpha{a:g}.csv")
        b = run["bands"][a]
        bands[f"{a:g}"] = {
            "set_fraction": run["sets"][a].fraction,
            **(b.to_dict() if b is not None else {"fractions": None, "class_set": []}),
        }
    write_json(out / "summary.json", {
        "command": "simplex",
        "config": _recorded(cfg),
        "partition": run["partition"].to_dict(),
        "bands": bands,
    })
    return {"bands": {a: v["fractions"] for a, v in bands.items()}}


def cmd_coverage(cfg) -> dict:
    model = ex.SphereRegressionModel(n=cfg["n"], h=cfg["h"])
    rep = ex.sphere_coverage_study(cfg["reps"], cfg["seed"], model, cfg["alpha"])
    out = _outdir(cfg)
    d = rep.to_dict()
    d["reps"] = cfg["reps"]
    write_json(out / "coverage.json", d)
    return {"coverage": d["overall"], "per_cell": d["per_cell"]}


COMMANDS = {
    "simulate-sphere": cmd_simulate_sphere,
    "simulate-stiefel": cmd_simulate_stiefel,
    "wind": cmd_wind,
    "simplex": cmd_simplex,
    "coverage": cmd_coverage,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mconf",
        description="Conformal prediction sets for manifold-valued responses.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "simulate-sphere": "vMF regression on the sphere; set, oracle cap, coverage",
        "simulate-stiefel": "PCA-frame regression on V_2(R^3); set and coverage",
        "wind": "paired wind stations on the cylinder (CSV input)",
        "simplex": "CD-split sets for class-probability vectors (CSV input)",
        "coverage": "repeated sphere runs; merged per-cell coverage",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="flat key=value file; flags override it")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--h", type=float, help="kernel bandwidth")
        s.add_argument("--n-grid", dest="n_grid", type=int)
        s.add_argument("--n-mc", dest="n_mc", type=int)
        if name in ("simulate-sphere", "simulate-stiefel", "coverage"):
            s.add_argument("--n", type=int, help="training sample size")
        if name in ("simulate-sphere", "simulate-stiefel"):
            s.add_argument("--x", type=float, help="query covariate")
        if name == "coverage":
            s.add_argument("--reps", type=int)
        if name in ("wind", "simplex"):
            s.add_argument("--input", help="input CSV")
            s.add_argument("--query", help="comma-separated query covariate")
        if name == "wind":
            s.add_argument("--truth", help="theta,r to check against the set, or none")
        if name == "simplex":
            s.add_argument("--n-bins", dest="n_bins", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code else EXIT_OK
    try:
        cfg = resolve(args.command, args)
        result = COMMANDS[args.command](cfg)
    except ValidationError as e:
        print(f"mconf: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"mconf: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, sort_keys=True, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
