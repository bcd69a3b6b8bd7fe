"""
Run configuration: YAML in, normalised dict and library objects out.

Every subcommand reads one YAML file. Missing optional keys are filled
with defaults, so the normalised dict (echoed into the run manifest)
fully determines a run. Field errors carry the dotted key path and, when
known, the line in the source file.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import QARegError, UsageError
from .estimator import EstimatorConfig, KernelSpec
from .hilbert_core import HilbertVector, TransformSpec
from .montecarlo import BandwidthRule, ExperimentConfig
from .process_sim import REGRESSION_MENU, LinearProcessModel, RegressionModel


class ConfigError(QARegError):
    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{field}: {message}")


def _line_map(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    out: dict[str, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key, val in node.value:
                p = f"{path}.{key.value}" if path else str(key.value)
                out[p] = key.start_mark.line + 1
                walk(val, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, val in enumerate(node.value):
                p = f"{path}[{i}]"
                out[p] = val.start_mark.line + 1
                walk(val, p)

    try:
        walk(yaml.compose(text, Loader=yaml.SafeLoader), "")
    except yaml.YAMLError:
        pass
    return out


def _f(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


class _Reader:
    """Typed access to a nested dict with error messages that name the field."""

    def __init__(self, lines: dict[str, int]):
        self.lines = lines

    def fail(self, field: str, message: str):
        raise ConfigError(field, message, self.lines.get(field))

    def section(self, raw: dict, key: str, required: bool = True) -> dict:
        val = raw.get(key)
        if val is None:
            if required:
                self.fail(key, "missing section")
            return {}
        if not isinstance(val, dict):
            self.fail(key, "must be a mapping")
        return val

    def number(self, d: dict, key: str, path: str, default=None, *, positive=False, nonneg=False, integer=False):
        field = _f(path, key)
        val = d.get(key, default)
        if val is None:
            self.fail(field, "required")
        if isinstance(val, str):
            # YAML 1.1 reads "1e5" (no dot) as a string
            try:
                val = float(val)
            except ValueError:
                pass
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(field, f"must be a number, got {val!r}")
        if integer:
            if float(val) != int(val):
                self.fail(field, f"must be an integer, got {val!r}")
            val = int(val)
        else:
            val = float(val)
        if not np.isfinite(val):
            self.fail(field, "must be finite")
        if positive and not val > 0:
            self.fail(field, f"must be positive, got {val}")
        if nonneg and val < 0:
            self.fail(field, f"must be >= 0, got {val}")
        return val

    def choice(self, d: dict, key: str, path: str, options, default=None) -> str:
        val = d.get(key, default)
        if val not in options:
            self.fail(_f(path, key), f"must be one of {list(options)}, got {val!r}")
        return val

    def vector(self, d: dict, key: str, path: str, default=None) -> list[float]:
        val = d.get(key, default)
        if not isinstance(val, (list, tuple)) or not val:
            self.fail(_f(path, key), "must be a nonempty list of numbers")
        try:
            out = [float(v) for v in val]
        except (TypeError, ValueError):
            self.fail(_f(path, key), "must be a nonempty list of numbers")
        if not all(np.isfinite(out)):
            self.fail(_f(path, key), "entries must be finite")
        return out


def load_yaml(path: Path) -> tuple[dict, dict[str, int]]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<file>", f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return raw, _line_map(text)


def is_manifest(raw: dict) -> bool:
    return "subcommand" in raw and "config" in raw and "tool_version" in raw


# ---------------------------------------------------------------- normalisation


def _norm_model(r: _Reader, raw: dict) -> dict:
    m = r.section(raw, "model")
    kind = r.choice(m, "kind", "model", ("iid", "geometric", "ma"), "iid")
    if kind == "ma":
        w = m.get("weights")
        try:
            a = np.array(w, dtype=float)
            if a.ndim == 2:
                a = a[None]
            LinearProcessModel(a)
        except (TypeError, ValueError, UsageError) as exc:
            r.fail("model.weights", f"must be a list of square d x d matrices ({exc})")
        return {"kind": "ma", "weights": a.tolist()}
    d = r.number(m, "d", "model", None, positive=True, integer=True)
    scale = r.number(m, "scale", "model", 1.0, positive=True)
    if kind == "iid":
        return {"kind": "iid", "d": d, "scale": scale}
    q = r.number(m, "q", "model", None, nonneg=True, integer=True)
    rho = r.number(m, "rho", "model", None)
    return {"kind": "geometric", "d": d, "q": q, "rho": rho, "scale": scale}


def _norm_regression(r: _Reader, raw: dict) -> dict:
    g = r.section(raw, "regression")
    out = {
        "function": r.choice(g, "function", "regression", tuple(REGRESSION_MENU), "sin"),
        "noise_sd": r.number(g, "noise_sd", "regression", 0.0, nonneg=True),
        "noise_mode": r.choice(g, "noise_mode", "regression", ("independent", "shared"), "independent"),
        "theta": r.number(g, "theta", "regression", 0.0),
    }
    if out["function"] == "linear":
        out["coef"] = r.number(g, "coef", "regression", 1.0)
        if g.get("direction") is not None:
            out["direction"] = r.vector(g, "direction", "regression")
    return out


def _norm_transform(r: _Reader, t: Any, path: str) -> dict:
    if t is None or t == "identity":
        return {"kind": "identity"}
    if not isinstance(t, dict):
        r.fail(path, "must be 'identity' or a mapping like {kind: clip, c: 2}")
    kind = r.choice(t, "kind", path, ("identity", "clip"), "identity")
    if kind == "clip":
        return {"kind": "clip", "c": r.number(t, "c", path, None, positive=True)}
    return {"kind": "identity"}


def _norm_estimator(r: _Reader, raw: dict) -> dict:
    e = r.section(raw, "estimator", required=False)
    out = {
        "kernel": r.choice(e, "kernel", "estimator", ("box", "slope"), "box"),
        "b0": r.number(e, "b0", "estimator", 5.0, positive=True),
        "transform": _norm_transform(r, e.get("transform"), "estimator.transform"),
        "h": None,
        "h_grid": None,
    }
    if e.get("h") is not None:
        out["h"] = r.number(e, "h", "estimator", positive=True)
    if e.get("h_grid") is not None:
        grid = r.vector(e, "h_grid", "estimator")
        if any(v <= 0 for v in grid):
            r.fail("estimator.h_grid", "entries must be positive")
        out["h_grid"] = grid
    return out


def _norm_bandwidth(r: _Reader, b: Any, path: str) -> dict:
    if not isinstance(b, dict):
        r.fail(path, "must be a mapping with a 'rule' key")
    rule = r.choice(b, "rule", path, ("fixed", "power", "neighbors"))
    if rule == "fixed":
        return {"rule": "fixed", "h": r.number(b, "h", path, positive=True)}
    if rule == "power":
        return {"rule": "power", "c": r.number(b, "c", path, positive=True),
                "kappa": r.number(b, "kappa", path, positive=True)}
    return {"rule": "neighbors", "k": r.number(b, "k", path, positive=True)}


def _int_list(r: _Reader, d: dict, key: str, path: str) -> list[int]:
    val = d.get(key)
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        val = [val]
    if not isinstance(val, list) or not val:
        r.fail(f"{path}.{key}", "must be an integer or a nonempty list of integers")
    out = []
    for i, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or float(v) != int(v):
            r.fail(f"{path}.{key}[{i}]", f"must be an integer, got {v!r}")
        out.append(int(v))
    return out


def _norm_experiment(r: _Reader, raw: dict, subcommand: str) -> dict:
    e = r.section(raw, "experiment")
    self_test = bool(e.get("self_test", False))
    out = {
        "x": r.vector(e, "x", "experiment"),
        "n": _int_list(r, e, "n", "experiment"),
        "bandwidth": _norm_bandwidth(r, e.get("bandwidth"), "experiment.bandwidth"),
        "replicates": r.number(e, "replicates", "experiment", None, positive=True, integer=True),
        "normalization": r.choice(e, "normalization", "experiment", ("oracle", "empirical"), "oracle"),
        "self_test": self_test,
        "sigma_target": r.choice(e, "sigma_target", "experiment", ("finite", "limit"), "finite"),
        "oracle_draws": r.number(e, "oracle_draws", "experiment", 200_000, positive=True, integer=True),
        "bootstrap": r.number(e, "bootstrap", "experiment", 200, positive=True, integer=True),
        "alpha": r.choice(e, "alpha", "experiment", (0.1, 0.05, 0.01), 0.01),
    }
    if out["replicates"] < 2:
        r.fail("experiment.replicates", "must be >= 2")
    if any(b <= a for a, b in zip(out["n"], out["n"][1:])) or min(out["n"]) < 1:
        r.fail("experiment.n", "must be positive and strictly increasing")
    return out


def normalize(raw: dict, subcommand: str, lines: dict[str, int] | None = None, base_dir: Path | None = None) -> dict:
    """Validate ``raw`` for ``subcommand`` and return the fully defaulted config."""
    r = _Reader(lines or {})
    raw = copy.deepcopy(raw)
    out: dict[str, Any] = {"seed": r.number(raw, "seed", "", 0, nonneg=True, integer=True)}
    base = Path(base_dir) if base_dir else Path.cwd()

    if subcommand in ("simulate", "clt", "variance", "qa-check"):
        out["model"] = _norm_model(r, raw)
        out["regression"] = _norm_regression(r, raw)
    if subcommand == "simulate":
        s = r.section(raw, "simulate")
        out["simulate"] = {"n": r.number(s, "n", "simulate", None, positive=True, integer=True)}
    elif subcommand == "estimate":
        out["estimator"] = _norm_estimator(r, raw)
        e = r.section(raw, "estimate")
        if not isinstance(e.get("sample"), str):
            r.fail("estimate.sample", "path to a y,x1,...,xd CSV is required")
        est = {
            "sample": str((base / e["sample"]).resolve()),
            "mode": r.choice(e, "mode", "estimate", ("empirical", "oracle"), "empirical"),
            "queries": None,
            "query_file": None,
        }
        if e.get("queries") is not None:
            q = e["queries"]
            if not isinstance(q, list) or not q:
                r.fail("estimate.queries", "must be a nonempty list of coefficient lists")
            est["queries"] = [r.vector({"q": row}, "q", f"estimate.queries[{i}]") for i, row in enumerate(q)]
        elif isinstance(e.get("query_file"), str):
            est["query_file"] = str((base / e["query_file"]).resolve())
        else:
            r.fail("estimate.queries", "give either queries or query_file")
        out["estimate"] = est
        if out["estimator"]["h"] is None and out["estimator"]["h_grid"] is None:
            r.fail("estimator.h", "give h or h_grid (for cross-validation)")
        if est["mode"] == "oracle":
            out["model"] = _norm_model(r, raw)
            out["regression"] = _norm_regression(r, raw)
    elif subcommand in ("clt", "variance"):
        out["estimator"] = _norm_estimator(r, raw)
        out["experiment"] = _norm_experiment(r, raw, subcommand)
    elif subcommand == "qa-check":
        q = r.section(raw, "qa_check")
        out["qa_check"] = {
            "I": _int_list(r, q, "I", "qa_check"),
            "J": _int_list(r, q, "J", "qa_check"),
            "probes": r.number(q, "probes", "qa_check", 100, positive=True, integer=True),
            "mc_samples": r.number(q, "mc_samples", "qa_check", 10_000, positive=True, integer=True),
        }
    elif subcommand == "rates":
        q = r.section(raw, "rates")
        phi = q.get("phi") or {"kind": "power", "b": q.get("b")}
        out["rates"] = {
            "a": r.number(q, "a", "rates", positive=True),
            "b": r.number(q, "b", "rates", positive=True),
            "delta": r.number(q, "delta", "rates", positive=True),
            "beta": r.number(q, "beta", "rates", 1.0, positive=True),
            "n": _int_list(r, q, "n", "rates"),
            "bandwidth": _norm_bandwidth(r, q.get("bandwidth"), "rates.bandwidth"),
            "phi": {
                "kind": r.choice(phi, "kind", "rates.phi", ("power",), "power"),
                "b": r.number(phi, "b", "rates.phi", q.get("b"), positive=True),
                "scale": r.number(phi, "scale", "rates.phi", 1.0, positive=True),
            },
            "grid": [],
        }
        if out["rates"]["delta"] >= 1:
            r.fail("rates.delta", "must lie in (0, 1)")
        if out["rates"]["bandwidth"]["rule"] == "neighbors":
            r.fail("rates.bandwidth.rule", "rates needs a 'fixed' or 'power' bandwidth rule")
        for i, row in enumerate(q.get("grid") or []):
            if not isinstance(row, dict):
                r.fail(f"rates.grid[{i}]", "must be a mapping with a, b, delta")
            p = f"rates.grid[{i}]"
            out["rates"]["grid"].append({
                "a": r.number(row, "a", p, positive=True),
                "b": r.number(row, "b", p, positive=True),
                "delta": r.number(row, "delta", p, positive=True),
            })
    else:
        raise ConfigError("subcommand", f"unknown subcommand {subcommand!r}")
    return out


# ---------------------------------------------------------------- builders


def build_model(cfg: dict) -> LinearProcessModel:
    m = cfg["model"]
    if m["kind"] == "iid":
        return LinearProcessModel.iid(m["d"], m["scale"])
    if m["kind"] == "geometric":
        return LinearProcessModel.geometric(m["d"], m["q"], m["rho"], m["scale"])
    return LinearProcessModel(np.array(m["weights"], dtype=float))


def build_regression(cfg: dict) -> RegressionModel:
    g = cfg["regression"]
    if g["function"] == "linear":
        fn = REGRESSION_MENU["linear"](g.get("coef", 1.0), g.get("direction"))
    else:
        fn = REGRESSION_MENU[g["function"]]()
    return RegressionModel(fn, g["noise_sd"], g["noise_mode"], g["theta"])


def build_transform(t: dict) -> TransformSpec:
    return TransformSpec.clip(t["c"]) if t["kind"] == "clip" else TransformSpec.identity()


def build_estimator(cfg: dict, h: float) -> EstimatorConfig:
    e = cfg["estimator"]
    return EstimatorConfig(h, e["b0"], build_transform(e["transform"]), KernelSpec(e["kernel"]))


def build_experiment(cfg: dict, threads: int | None = None) -> ExperimentConfig:
    e = cfg["experiment"]
    est = cfg["estimator"]
    model = build_model(cfg)
    if len(e["x"]) != model.d:
        raise ConfigError("experiment.x", f"has {len(e['x'])} coefficients, model has d={model.d}")
    return ExperimentConfig(
        model=model,
        regression=build_regression(cfg),
        x=HilbertVector(e["x"]),
        n_schedule=tuple(e["n"]),
        bandwidth=BandwidthRule(**e["bandwidth"]),
        replicates=e["replicates"],
        seed=cfg["seed"],
        normalization=e["normalization"],
        kernel=KernelSpec(est["kernel"]),
        transform=build_transform(est["transform"]),
        b0=est["b0"],
        self_test=e["self_test"],
        sigma_target=e["sigma_target"],
        oracle_draws=e["oracle_draws"],
        bootstrap=e["bootstrap"],
        threads=threads,
    )
