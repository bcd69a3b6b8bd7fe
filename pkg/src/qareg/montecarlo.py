"""
Replicated experiments for the variance limit and the asymptotic
normality of the kernel regression estimator.

Each replicate gets its own ``SeedSequence(master, spawn_key=(stream, i))``.
Results therefore do not depend on thread scheduling, and any single
replicate can be regenerated in isolation.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import special, stats

from .asymptotics import sigma_plugin, standardize
from .errors import DegenerateVariance, ExperimentError, NoNeighbors, UsageError
from .estimator import EstimatorConfig, KernelSpec, estimate_details, numerator_denominator, small_ball_empirical
from .hilbert_core import HilbertVector, TransformSpec
from .oracle import DEFAULT_DRAWS, OracleQuantities, oracle_quantities, small_ball_quantile
from .process_sim import LinearProcessModel, RegressionModel, simulate

KS_C_ALPHA = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}
MAX_FAILURE_FRACTION = 0.05

_REPLICATE, _ORACLE, _BOOTSTRAP, _SELF_TEST = 0, 1, 2, 3


def replicate_seed(master: int, stream: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(stream), int(index)))


@dataclass(frozen=True)
class BandwidthRule:
    """How ``h`` follows ``n``.

    ``fixed``: ``h``; ``power``: ``c * n**(-kappa)``; ``neighbors``: the
    radius with ``n * F(h, x) = k`` under the model.
    """

    rule: str = "fixed"
    h: float = 1.0
    c: float = 1.0
    kappa: float = 0.2
    k: float = 100.0

    def __post_init__(self):
        if self.rule not in ("fixed", "power", "neighbors"):
            raise UsageError(f"unknown bandwidth rule {self.rule!r}")
        if self.rule == "fixed" and not self.h > 0:
            raise UsageError("fixed bandwidth must be positive")
        if self.rule == "power" and not (self.c > 0 and self.kappa > 0):
            raise UsageError("power rule needs c > 0 and kappa > 0")
        if self.rule == "neighbors" and not self.k > 0:
            raise UsageError("neighbors rule needs k > 0")

    def bandwidth(self, n: int, model: LinearProcessModel, x) -> float:
        if self.rule == "fixed":
            return float(self.h)
        if self.rule == "power":
            return float(self.c * n ** (-self.kappa))
        if self.k >= n:
            raise UsageError(f"neighbors rule needs k < n (k={self.k}, n={n})")
        return small_ball_quantile(model, x, self.k / n)

    def describe(self) -> dict:
        keep = {"fixed": ("h",), "power": ("c", "kappa"), "neighbors": ("k",)}[self.rule]
        return {"rule": self.rule, **{key: getattr(self, key) for key in keep}}


@dataclass(frozen=True)
class ExperimentConfig:
    model: LinearProcessModel
    regression: RegressionModel
    x: HilbertVector
    n_schedule: tuple[int, ...]
    bandwidth: BandwidthRule
    replicates: int
    seed: int = 0
    normalization: str = "oracle"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    transform: TransformSpec = field(default_factory=TransformSpec.identity)
    b0: float = 5.0
    self_test: bool = False
    sigma_target: str = "finite"
    oracle_draws: int = DEFAULT_DRAWS
    bootstrap: int = 200
    threads: int | None = None

    def __post_init__(self):
        x = self.x if isinstance(self.x, HilbertVector) else HilbertVector(self.x)
        object.__setattr__(self, "x", x)
        ns = tuple(int(n) for n in np.atleast_1d(self.n_schedule))
        object.__setattr__(self, "n_schedule", ns)
        if not ns or any(n < 1 for n in ns):
            raise UsageError("n_schedule must hold positive sample sizes")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise UsageError("n_schedule must be strictly increasing")
        if int(self.replicates) < 2:
            raise UsageError("need at least 2 replicates")
        if x.dim != self.model.d:
            raise UsageError(f"query point has dimension {x.dim}, model has d={self.model.d}")
        if self.normalization not in ("oracle", "empirical"):
            raise UsageError("normalization must be 'oracle' or 'empirical'")
        if self.sigma_target not in ("finite", "limit"):
            raise UsageError("sigma_target must be 'finite' or 'limit'")
        if int(self.bootstrap) < 1:
            raise UsageError("bootstrap must be >= 1")

    def estimator(self, h: float) -> EstimatorConfig:
        return EstimatorConfig(h, self.b0, self.transform, self.kernel)

    def oracle(self, index: int, n: int) -> OracleQuantities:
        h = self.bandwidth.bandwidth(n, self.model, self.x)
        return oracle_quantities(
            self.model, self.regression, self.x, h, self.kernel, self.transform,
            draws=self.oracle_draws, seed=replicate_seed(self.seed, _ORACLE, index),
        )


def _map(fn: Callable, items: Sequence, threads: int | None) -> list:
    workers = threads or os.cpu_count() or 1
    if workers <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- KS instrument


def ks_normal_distance(values) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal CDF."""
    v = np.sort(np.asarray(values, dtype=float).reshape(-1))
    if v.size < 2:
        raise UsageError("need at least 2 values")
    if not np.all(np.isfinite(v)):
        raise UsageError("values must be finite")
    M = v.size
    Phi = special.ndtr(v)
    i = np.arange(1, M + 1)
    return float(max(np.max(i / M - Phi), np.max(Phi - (i - 1) / M)))


def ks_threshold(M: int, alpha: float = 0.01) -> float:
    """Asymptotic critical value ``c(alpha) / sqrt(M)``."""
    try:
        return KS_C_ALPHA[alpha] / math.sqrt(M)
    except KeyError:
        raise UsageError(f"alpha must be one of {sorted(KS_C_ALPHA)}") from None


@dataclass
class NormalityReport:
    stats: np.ndarray = field(repr=False)
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    ks_threshold: float
    alpha: float
    qq_pairs: np.ndarray = field(repr=False)
    degenerate: bool = False

    @property
    def M(self) -> int:
        return self.stats.size

    @property
    def ks_pass(self) -> bool:
        return self.ks_distance < self.ks_threshold

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "mean": self.mean,
            "variance": self.variance,
            "skewness": self.skewness,
            "excess_kurtosis": self.excess_kurtosis,
            "ks_distance": self.ks_distance,
            "ks_threshold": self.ks_threshold,
            "alpha": self.alpha,
            "ks_pass": self.ks_pass,
            "degenerate": self.degenerate,
            "stats": self.stats.tolist(),
        }


def normality_report(values, alpha: float = 0.01, degenerate: bool = False) -> NormalityReport:
    v = np.asarray(values, dtype=float).reshape(-1)
    ks = ks_normal_distance(v)
    M = v.size
    var = float(np.var(v, ddof=1))
    if var > 0:
        skew = float(stats.skew(v))
        kurt = float(stats.kurtosis(v))
    else:
        skew = kurt = float("nan")
        degenerate = True
    theo = special.ndtri((np.arange(1, M + 1) - 0.5) / M)
    qq = np.column_stack([theo, np.sort(v)])
    return NormalityReport(
        stats=v, mean=float(v.mean()), variance=var, skewness=skew, excess_kurtosis=kurt,
        ks_distance=ks, ks_threshold=ks_threshold(M, alpha), alpha=alpha, qq_pairs=qq,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------- CLT experiment


@dataclass
class CltStage:
    """One sample size of a CLT experiment."""

    n: int
    h: float
    phi_h: float
    truth: float
    sigma2_sq: float
    sigma2_sq_limit: float
    report: NormalityReport
    plugin_report: NormalityReport | None
    no_neighbors: int
    plugin_degenerate: int
    oracle: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "h": self.h,
            "phi_h": self.phi_h,
            "truth": self.truth,
            "sigma2_sq": self.sigma2_sq,
            "sigma2_sq_limit": self.sigma2_sq_limit,
            "no_neighbors": self.no_neighbors,
            "plugin_degenerate": self.plugin_degenerate,
            "oracle": self.oracle,
            "normality": self.report.to_dict(),
            "normality_plugin": None if self.plugin_report is None else self.plugin_report.to_dict(),
        }


@dataclass
class CltResult:
    stages: list[CltStage]
    rows: list[dict] = field(repr=False)
    self_test: bool = False

    @property
    def report(self) -> NormalityReport:
        """Oracle-standardised report at the largest sample size."""
        return self.stages[-1].report

    def to_dict(self) -> dict:
        return {"kind": "clt", "self_test": self.self_test, "stages": [s.to_dict() for s in self.stages]}


def _clt_replicate(cfg: ExperimentConfig, index: int, n: int, h: float, oq: OracleQuantities | None, sigma_sq: float):
    def run(rep: int) -> dict:
        row = {"replicate": rep, "n": n, "h": h, "r_hat": float("nan"),
               "statistic_oracle": float("nan"), "statistic_plugin": float("nan"), "status": "ok"}
        if cfg.self_test:
            seq = replicate_seed(cfg.seed, _SELF_TEST, index * 1_000_000 + rep)
            row["statistic_oracle"] = float(np.random.default_rng(seq).standard_normal())
            row["status"] = "self-test"
            return row
        seq = replicate_seed(cfg.seed, _REPLICATE, index * 1_000_000 + rep)
        sample = simulate(cfg.model, cfg.regression, n, seq)
        est_cfg = cfg.estimator(h)
        try:
            est = estimate_details(sample, cfg.x, est_cfg)
        except NoNeighbors:
            row["status"] = "NoNeighbors"
            return row
        row["r_hat"] = est.r_hat
        if cfg.normalization == "oracle":
            phi_h = oq.phi_h
        else:
            phi_h = float(small_ball_empirical(sample, cfg.x, [h]).F_hat[0])
        scale = math.sqrt(n * phi_h)
        if sigma_sq > 0:
            row["statistic_oracle"] = scale * (est.r_hat - oq.r_x) / math.sqrt(sigma_sq)
        else:
            # degenerate target: report the unscaled residual and flag the stage
            row["statistic_oracle"] = scale * (est.r_hat - oq.r_x)
        var = sigma_plugin(sample, cfg.x, est_cfg, oq.c1, oq.c2, phi_h)
        try:
            row["statistic_plugin"] = standardize(est.r_hat, oq.r_x, n, phi_h, var.sigma2_sq if not var.degenerate else 0.0)
        except DegenerateVariance:
            row["status"] = "plugin-degenerate"
        return row

    return run


def run_clt_experiment(cfg: ExperimentConfig, alpha: float = 0.01) -> CltResult:
    """Replicate ``sqrt(n phi(h)) (r_n(x) - r(x)) / sigma_2`` and test it for normality.

    With ``cfg.self_test`` the statistics are replaced by standard normal
    draws, which calibrates the KS instrument itself.

    Raises
    ------
    ExperimentError
        If more than 5% of replicates have no neighbours within ``h`` (or a
        degenerate plug-in variance while the oracle variance is positive).
    """
    stages, rows = [], []
    M = int(cfg.replicates)
    for index, n in enumerate(cfg.n_schedule):
        if cfg.self_test:
            h, oq, sigma_sq, limit = float("nan"), None, 1.0, 1.0
        else:
            oq = cfg.oracle(index, n)
            h = oq.h
            limit = oq.sigma2_sq_limit
            sigma_sq = oq.sigma2_sq_finite if cfg.sigma_target == "finite" else limit
        stage_rows = _map(_clt_replicate(cfg, index, n, h, oq, sigma_sq), range(M), cfg.threads)
        rows.extend(stage_rows)

        no_nb = sum(r["status"] == "NoNeighbors" for r in stage_rows)
        plug_deg = sum(r["status"] == "plugin-degenerate" for r in stage_rows)
        degenerate_target = not sigma_sq > 0
        failures = no_nb + (0 if degenerate_target else plug_deg)
        if failures > MAX_FAILURE_FRACTION * M:
            raise ExperimentError(
                f"n={n}, h={h:.4g}: {no_nb} replicates without neighbours and {plug_deg} with "
                f"degenerate plug-in variance out of {M}; enlarge the bandwidth"
            )
        vals = np.array([r["statistic_oracle"] for r in stage_rows])
        vals = vals[np.isfinite(vals)]
        if vals.size < 2:
            raise ExperimentError(f"n={n}: fewer than 2 usable replicates")
        report = normality_report(vals, alpha, degenerate=degenerate_target)
        plugin = None
        pv = np.array([r["statistic_plugin"] for r in stage_rows])
        pv = pv[np.isfinite(pv)]
        if pv.size >= 2:
            plugin = normality_report(pv, alpha)
        stages.append(CltStage(
            n=n, h=h, phi_h=float("nan") if oq is None else oq.phi_h,
            truth=float("nan") if oq is None else oq.r_x,
            sigma2_sq=sigma_sq, sigma2_sq_limit=limit, report=report, plugin_report=plugin,
            no_neighbors=no_nb, plugin_degenerate=plug_deg,
            oracle=None if oq is None else oq.to_dict(),
        ))
    return CltResult(stages, rows, cfg.self_test)


# ---------------------------------------------------------------- variance experiment


@dataclass
class VarianceStage:
    n: int
    h: float
    phi_h: float
    e_delta: float
    truth: float
    sigma1_sq: float
    sigma2_sq: float
    scaled_var1: float
    scaled_var2: float
    ratio1: float
    ratio2: float
    ci1: tuple[float, float]
    ci2: tuple[float, float]
    mean_f_n: float
    se_mean_f_n: float
    sigma1_sq_finite: float
    sigma2_sq_finite: float

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci1"] = list(self.ci1)
        out["ci2"] = list(self.ci2)
        return out


@dataclass
class VarianceConvergenceReport:
    stages: list[VarianceStage]
    rows: list[dict] = field(repr=False)
    replicates: int = 0
    bootstrap: int = 0

    def _toward_one(self, attr: str) -> bool | None:
        if len(self.stages) < 2:
            return None
        first, last = getattr(self.stages[0], attr), getattr(self.stages[-1], attr)
        return bool(abs(last - 1.0) < abs(first - 1.0))

    @property
    def sigma1_moves_toward_one(self) -> bool | None:
        return self._toward_one("ratio1")

    @property
    def sigma2_moves_toward_one(self) -> bool | None:
        return self._toward_one("ratio2")

    def to_dict(self) -> dict:
        return {
            "kind": "variance",
            "normalization": "oracle",
            "replicates": self.replicates,
            "bootstrap": self.bootstrap,
            "sigma1_moves_toward_one": self.sigma1_moves_toward_one,
            "sigma2_moves_toward_one": self.sigma2_moves_toward_one,
            "stages": [s.to_dict() for s in self.stages],
        }


def _bootstrap_ci(values: np.ndarray, scale: float, B: int, rng: np.random.Generator) -> tuple[float, float]:
    M = values.size
    idx = rng.integers(0, M, size=(B, M))
    boot = values[idx].var(axis=1, ddof=1) * scale
    lo, hi = np.quantile(boot, [0.025, 0.975])
    return float(lo), float(hi)


def run_variance_experiment(cfg: ExperimentConfig) -> VarianceConvergenceReport:
    """``n phi(h) Var(g_n(x))`` and ``n phi(h) Var(g_n - r f_n)`` against their limits.

    The denominators use the oracle ``E Delta_1(x)``; confidence intervals
    come from a replicate bootstrap with ``cfg.bootstrap`` resamples.
    """
    if cfg.normalization != "oracle":
        raise UsageError("the variance experiment needs oracle normalization")
    if cfg.self_test:
        raise UsageError("self-test mode applies to the CLT experiment only")
    M = int(cfg.replicates)
    stages, rows = [], []
    for index, n in enumerate(cfg.n_schedule):
        oq = cfg.oracle(index, n)
        est_cfg = cfg.estimator(oq.h)

        def run(rep: int, n=n, oq=oq, est_cfg=est_cfg) -> dict:
            seq = replicate_seed(cfg.seed, _REPLICATE, index * 1_000_000 + rep)
            sample = simulate(cfg.model, cfg.regression, n, seq)
            g, f = numerator_denominator(sample, cfg.x, est_cfg, oq.e_delta)
            return {"replicate": rep, "n": n, "h": oq.h, "g_n": g, "f_n": f, "g_minus_rf": g - oq.r_x * f}

        stage_rows = _map(run, range(M), cfg.threads)
        rows.extend(stage_rows)
        g = np.array([r["g_n"] for r in stage_rows])
        f = np.array([r["f_n"] for r in stage_rows])
        gr = np.array([r["g_minus_rf"] for r in stage_rows])
        scale = n * oq.phi_h
        s1, s2 = oq.sigma1_sq_limit, oq.sigma2_sq_limit
        v1 = float(np.var(g, ddof=1)) * scale
        v2 = float(np.var(gr, ddof=1)) * scale
        rng = np.random.default_rng(replicate_seed(cfg.seed, _BOOTSTRAP, index))
        ci1 = _bootstrap_ci(g, scale / s1, cfg.bootstrap, rng) if s1 > 0 else (float("nan"),) * 2
        ci2 = _bootstrap_ci(gr, scale / s2, cfg.bootstrap, rng) if s2 > 0 else (float("nan"),) * 2
        stages.append(VarianceStage(
            n=n, h=oq.h, phi_h=oq.phi_h, e_delta=oq.e_delta, truth=oq.r_x,
            sigma1_sq=s1, sigma2_sq=s2, scaled_var1=v1, scaled_var2=v2,
            ratio1=v1 / s1 if s1 > 0 else float("nan"),
            ratio2=v2 / s2 if s2 > 0 else float("nan"),
            ci1=ci1, ci2=ci2,
            mean_f_n=float(f.mean()), se_mean_f_n=float(f.std(ddof=1) / math.sqrt(M)),
            sigma1_sq_finite=oq.sigma1_sq_finite, sigma2_sq_finite=oq.sigma2_sq_finite,
        ))
    return VarianceConvergenceReport(stages, rows, M, int(cfg.bootstrap))


# ---------------------------------------------------------------- output


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def dump_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def write_csv(rows: Sequence[dict], columns: Sequence[str], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


CLT_COLUMNS = ("replicate", "n", "h", "r_hat", "statistic_oracle", "statistic_plugin", "status")
VARIANCE_COLUMNS = ("replicate", "n", "h", "g_n", "f_n", "g_minus_rf")


def write_clt_outputs(result: CltResult, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [out_dir / "stats.csv", out_dir / "report.json", out_dir / "qq.csv"]
    write_csv(result.rows, CLT_COLUMNS, paths[0])
    dump_json(result.to_dict(), paths[1])
    qq_rows = [
        {"n": st.n, "theoretical": float(t), "empirical": float(e)}
        for st in result.stages for t, e in st.report.qq_pairs
    ]
    write_csv(qq_rows, ("n", "theoretical", "empirical"), paths[2])
    return paths


def write_variance_outputs(report: VarianceConvergenceReport, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [out_dir / "stats.csv", out_dir / "report.json"]
    write_csv(report.rows, VARIANCE_COLUMNS, paths[0])
    dump_json(report.to_dict(), paths[1])
    return paths
