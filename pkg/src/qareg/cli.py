"""
Command-line front end.

    qareg SUBCOMMAND --config run.yaml --out DIR [--seed N] [--threads N]

Every run writes its outputs plus ``manifest.json`` into ``DIR``. The
manifest echoes the normalised config and the seed, and can itself be
passed as ``--config`` to replay the run.

Exit codes: 0 success, 2 config or usage error, 3 experiment error,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import RateParams, check_rate_conditions
from .config import (
    ConfigError,
    build_estimator,
    build_experiment,
    build_model,
    build_regression,
    is_manifest,
    load_yaml,
    normalize,
)
from .dependence import qa_inequality_check
from .errors import (
    ConvergenceError,
    DegenerateVariance,
    ExperimentError,
    NoNeighbors,
    SelectionError,
    UsageError,
)
from .estimator import cross_validate_bandwidth, empirical_norm, estimate_details, numerator_denominator
from .hilbert_core import FunctionalSample
from .montecarlo import (
    BandwidthRule,
    dump_json,
    run_clt_experiment,
    run_variance_experiment,
    write_clt_outputs,
    write_csv,
    write_variance_outputs,
)
from .oracle import oracle_quantities
from .process_sim import simulate

EXIT_OK, EXIT_CONFIG, EXIT_EXPERIMENT, EXIT_IO = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "estimate", "clt", "variance", "qa-check", "rates")
MANIFEST = "manifest.json"
ESTIMATE_COLUMNS = ("x_id", "h", "n_neighbors", "r_hat", "g_n", "f_n", "mode", "status")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- subcommands


def cmd_simulate(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    sample = simulate(build_model(cfg), build_regression(cfg), cfg["simulate"]["n"], cfg["seed"])
    path = out / "sample.csv"
    sample.to_csv(path)
    return [path]


def _read_queries(est: dict) -> np.ndarray:
    if est["queries"] is not None:
        return np.array(est["queries"], dtype=float)
    with open(est["query_file"], newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ConfigError("estimate.query_file", "needs a header row and at least one query")
    try:
        return np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ConfigError("estimate.query_file", f"non-numeric value ({exc})") from None


def cmd_estimate(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    """One row per query point; a query without neighbours is a status row, not a failure."""
    est = cfg["estimate"]
    sample = FunctionalSample.read_csv(est["sample"])
    queries = _read_queries(est)
    if queries.ndim != 2 or queries.shape[1] != sample.d:
        raise ConfigError("estimate.queries", f"query points must have {sample.d} coefficients")
    h_grid = cfg["estimator"]["h_grid"]
    extra = []
    if h_grid is not None:
        base = build_estimator(cfg, min(h_grid))
        cv = cross_validate_bandwidth(sample, None, h_grid, base)
        h = cv.h
        cv_rows = [{"h": float(g), "loss": float(l), "n_used": int(u)}
                   for g, l, u in zip(cv.h_grid, cv.losses, cv.n_used)]
        extra.append(out / "cv.csv")
        write_csv(cv_rows, ("h", "loss", "n_used"), extra[-1])
    else:
        h = cfg["estimator"]["h"]
    ecfg = build_estimator(cfg, h)
    mode = est["mode"]
    if mode == "oracle":
        model, reg = build_model(cfg), build_regression(cfg)
        if model.d != sample.d:
            raise ConfigError("model", f"model has d={model.d}, sample has d={sample.d}")

    rows = []
    for i, x in enumerate(queries):
        row = {"x_id": i, "h": float(h), "n_neighbors": 0, "r_hat": float("nan"),
               "g_n": float("nan"), "f_n": float("nan"), "mode": mode, "status": "ok"}
        try:
            e = estimate_details(sample, x, ecfg)
        except NoNeighbors:
            row["status"] = "NoNeighbors"
            rows.append(row)
            continue
        if mode == "oracle":
            norm = oracle_quantities(model, reg, x, h, ecfg.kernel, ecfg.transform, seed=[cfg["seed"], i]).e_delta
        else:
            norm = empirical_norm(sample, x, ecfg)
        g, f = numerator_denominator(sample, x, ecfg, norm)
        row.update(n_neighbors=e.n_neighbors, r_hat=e.r_hat, g_n=g, f_n=f)
        rows.append(row)
    path = out / "estimates.csv"
    write_csv(rows, ESTIMATE_COLUMNS, path)
    return [path] + extra


def cmd_clt(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    result = run_clt_experiment(build_experiment(cfg, threads), alpha=cfg["experiment"]["alpha"])
    return write_clt_outputs(result, out)


def cmd_variance(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    report = run_variance_experiment(build_experiment(cfg, threads))
    return write_variance_outputs(report, out)


def cmd_qa_check(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    q = cfg["qa_check"]
    report = qa_inequality_check(
        build_model(cfg), build_regression(cfg), q["I"], q["J"],
        probes=q["probes"], mc_samples=q["mc_samples"], seed=cfg["seed"],
    )
    out_dict = report.to_dict()
    out_dict["violation_rate"] = report.violation_rate
    path = out / "report.json"
    dump_json(out_dict, path)
    return [path]


def cmd_rates(cfg: dict, out: Path, threads: int | None) -> list[Path]:
    r = cfg["rates"]
    rule = BandwidthRule(**r["bandwidth"])
    ns = r["n"]
    hs = [rule.bandwidth(n, None, None) for n in ns]
    phi = r["phi"]
    phis = [phi["scale"] * h ** phi["b"] for h in hs]
    report = check_rate_conditions(RateParams(r["a"], r["b"], r["delta"], r["beta"]), ns, hs, phis)

    grid = []
    for g in r["grid"]:
        p = RateParams(g["a"], g["b"], g["delta"], r["beta"])
        grid.append({**g, "threshold": p.a_threshold, "decay_ok": bool(p.a > p.a_threshold)})
    body = report.to_dict()
    body["grid"] = grid
    paths = [out / "rates.json", out / "rates.csv"]
    dump_json(body, paths[0])
    sched = [
        {"n": int(n), "h": h, "phi_h": p, "log_term": lt, "growth_term": gt, "bias_term": bt}
        for n, h, p, lt, gt, bt in zip(report.n, report.h, report.phi_h,
                                       report.log_term, report.growth_term, report.bias_term)
    ]
    write_csv(sched, ("n", "h", "phi_h", "log_term", "growth_term", "bias_term"), paths[1])
    if grid:
        paths.append(out / "rates_grid.csv")
        write_csv(grid, ("a", "b", "delta", "threshold", "decay_ok"), paths[2])
    return paths


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "clt": cmd_clt,
    "variance": cmd_variance,
    "qa-check": cmd_qa_check,
    "rates": cmd_rates,
}


# ---------------------------------------------------------------- driver


def _parse_seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _parse_threads(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qareg", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"qareg {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "simulate": "draw a sample from a moving-average model",
        "estimate": "kernel regression estimates at query points",
        "clt": "Monte Carlo check of asymptotic normality",
        "variance": "Monte Carlo check of the variance limits",
        "qa-check": "empirical check of the quasi-association inequality",
        "rates": "rate-condition table for a bandwidth schedule",
    }
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, type=Path, metavar="PATH",
                       help="YAML config, or a manifest.json to replay")
        s.add_argument("--out", type=Path, default=Path("qareg-out"), metavar="DIR",
                       help="output directory (default: ./qareg-out)")
        s.add_argument("--seed", type=_parse_seed, default=None, metavar="U64",
                       help="master seed, overrides the config")
        s.add_argument("--threads", type=_parse_threads, default=None, metavar="N",
                       help="worker cap (default: available cores)")
    return p


def _resolve_config(args) -> tuple[dict, str]:
    path = args.config
    if path.suffix == ".json":
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not (isinstance(raw, dict) and is_manifest(raw)):
            raise ConfigError("<file>", "a .json config must be a run manifest")
        lines = {}
    else:
        raw, lines = load_yaml(path)
    if is_manifest(raw):
        if raw["subcommand"] != args.subcommand:
            raise ConfigError("subcommand", f"manifest is for {raw['subcommand']!r}, not {args.subcommand!r}")
        raw = raw["config"]
        if not isinstance(raw, dict):
            raise ConfigError("config", "manifest config echo must be a mapping")
        lines = {}
    cfg = normalize(raw, args.subcommand, lines, base_dir=path.resolve().parent)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg, str(path)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = _now()
    try:
        cfg, config_path = _resolve_config(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        outputs = COMMANDS[args.subcommand](cfg, out, args.threads)
        manifest = {
            "subcommand": args.subcommand,
            "config_path": config_path,
            "config": cfg,
            "tool_version": __version__,
            "seed": cfg["seed"],
            "started": started,
            "finished": _now(),
            "outputs": sorted([p.name for p in outputs] + [MANIFEST]),
        }
        dump_json(manifest, out / MANIFEST)
    except (ConfigError, UsageError) as exc:
        print(f"qareg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExperimentError, NoNeighbors, SelectionError, DegenerateVariance, ConvergenceError) as exc:
        print(f"qareg: experiment error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except OSError as exc:
        print(f"qareg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    missing = [p for p in manifest["outputs"] if not (out / p).is_file()]
    if missing:
        print(f"qareg: I/O error: declared outputs missing: {missing}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
