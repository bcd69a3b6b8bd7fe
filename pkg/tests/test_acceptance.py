"""
Acceptance criteria, one test each, at the stated tolerances.

Every test prints a single ``[criterion N] PASS|FAIL ...`` line; the lines
are repeated in the pytest terminal summary. Run standalone with
``python tests/test_acceptance.py`` for the lines alone.
"""

import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from qareg.asymptotics import RateParams, SmallBallFunction, check_rate_conditions, compute_cj
from qareg.cli import run as cli_run
from qareg.dependence import qa_inequality_check
from qareg.errors import NoNeighbors
from qareg.estimator import EstimatorConfig, KernelSpec, regression_estimate
from qareg.hilbert_core import FunctionalSample, TransformSpec
from qareg.montecarlo import BandwidthRule, ExperimentConfig, run_clt_experiment, run_variance_experiment
from qareg.process_sim import (
    LinearProcessModel,
    RegressionModel,
    sin_function,
    square_clip_function,
    zero_function,
)

MASTER_SEED = 20261019
RESULTS: list[str] = []


def report(number: int, ok: bool, detail: str) -> None:
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)


def test_criterion_1_box_kernel_is_local_mean():
    rng = np.random.default_rng(MASTER_SEED)
    t0 = time.perf_counter()
    worst, checked = 0.0, 0
    transforms = [TransformSpec.identity(), TransformSpec.clip(0.5)]
    for i in range(100):
        n, d = int(rng.integers(1, 51)), int(rng.integers(1, 6))
        X = rng.standard_normal((n, d))
        y = rng.standard_normal(n) * 3
        x = X[rng.integers(n)] + 0.2 * rng.standard_normal(d)
        h = float(rng.uniform(0.3, 2.5))
        phi = transforms[i % 2]
        inside = [k for k in range(n) if np.sqrt(sum((X[k, j] - x[j]) ** 2 for j in range(d))) <= h]
        try:
            r = regression_estimate(FunctionalSample(X, y), x, EstimatorConfig(h, transform=phi))
        except NoNeighbors:
            assert not inside
            continue
        mean = sum(float(phi(y[k])) for k in inside) / len(inside)
        worst = max(worst, abs(r - mean))
        checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 1.0
    report(1, ok, f"max |r_n - mean| = {worst:.2e} over {checked} instances with neighbours, {elapsed:.2f}s")
    assert ok


def test_criterion_2_kernel_constants():
    t0 = time.perf_counter()
    box, slope = KernelSpec("box"), KernelSpec("slope")
    cases = [(box, SmallBallFunction.power(b), j, 1.0) for b in (1, 2, 3) for j in (1, 2)]
    cases += [(slope, SmallBallFunction.power(1), 1, 1.5), (slope, SmallBallFunction.power(1), 2, 7 / 3)]
    errs = [abs(compute_cj(k, sb, j) - want) for k, sb, j, want in cases]
    elapsed = time.perf_counter() - t0
    ok = max(errs) < 1e-6 and elapsed < 1.0
    report(2, ok, f"max |C_j - expected| = {max(errs):.2e} over {len(cases)} cases, {elapsed:.2f}s")
    assert ok


def test_criterion_3_quasi_association_inequality():
    t0 = time.perf_counter()
    model = LinearProcessModel(np.array([[[1.0, 0.3], [0.2, 1.0]], [[0.5, 0.1], [0.0, 0.5]]]))
    reg = RegressionModel(sin_function(), 0.5, "shared", 0.3)
    rep = qa_inequality_check(model, reg, [1, 2], [3, 4], probes=1000, mc_samples=100_000, seed=MASTER_SEED)
    elapsed = time.perf_counter() - t0
    ok = rep.violation_rate <= 0.01 and elapsed < 300
    report(3, ok, f"violation rate {rep.violation_rate:.3f} ({rep.violations}/1000), "
                  f"worst margin {rep.worst_margin:.2e}, {elapsed:.1f}s")
    assert ok


def test_criterion_4_variance_limits():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(
        model=LinearProcessModel.iid(3),
        regression=RegressionModel(square_clip_function(), 0.2),
        x=[0.0, 0.0, 0.0],
        n_schedule=(2000, 10_000),
        bandwidth=BandwidthRule("power", c=6.0, kappa=0.3),
        replicates=500,
        seed=MASTER_SEED,
    )
    rep = run_variance_experiment(cfg)
    first, last = rep.stages
    elapsed = time.perf_counter() - t0
    ok1 = 0.75 <= last.ratio1 <= 1.25 and rep.sigma1_moves_toward_one
    ok2 = 0.75 <= last.ratio2 <= 1.25 and rep.sigma2_moves_toward_one
    ok = ok1 and ok2 and elapsed < 600
    report(4, ok, f"sigma1 ratio {first.ratio1:.3f} -> {last.ratio1:.3f}, "
                  f"sigma2 ratio {first.ratio2:.3f} -> {last.ratio2:.3f}, {elapsed:.1f}s")
    assert ok


def clt_config(model):
    return ExperimentConfig(
        model=model,
        regression=RegressionModel(sin_function(), 0.5),
        x=[0.0, 0.0, 0.0],
        n_schedule=(5000,),
        bandwidth=BandwidthRule("neighbors", k=100),
        replicates=500,
        seed=MASTER_SEED,
    )


def test_criterion_5_clt_independent():
    t0 = time.perf_counter()
    r = run_clt_experiment(clt_config(LinearProcessModel.iid(3))).report
    elapsed = time.perf_counter() - t0
    ok = r.ks_distance < 0.09 and abs(r.mean) < 0.15 and abs(r.variance - 1) < 0.25 and elapsed < 600
    report(5, ok, f"KS {r.ks_distance:.4f}, mean {r.mean:+.3f}, variance {r.variance:.3f}, {elapsed:.1f}s")
    assert ok


def test_criterion_6_clt_dependent():
    t0 = time.perf_counter()
    r = run_clt_experiment(clt_config(LinearProcessModel.geometric(3, 5, 0.5))).report
    elapsed = time.perf_counter() - t0
    ok = r.ks_distance < 0.10 and elapsed < 900
    report(6, ok, f"KS {r.ks_distance:.4f} (mean {r.mean:+.3f}, variance {r.variance:.3f}), {elapsed:.1f}s")
    assert ok


# (a, b, delta, threshold (2 + b) / (delta b) worked by hand, expected)
RATE_TABLE = [
    (3.5, 2.0, 0.5, 4.0, False),
    (4.0, 2.0, 0.5, 4.0, False),
    (4.5, 2.0, 0.5, 4.0, True),
    (5.75, 1.0, 0.5, 6.0, False),
    (6.25, 1.0, 0.5, 6.0, True),
    (6.0, 4.0, 0.25, 6.0, False),
    (6.5, 4.0, 0.25, 6.0, True),
    (8.5, 2.0, 0.25, 8.0, True),
]


def test_criterion_7_rate_truth_table():
    t0 = time.perf_counter()
    mismatches = []
    for a, b, delta, threshold, expected in RATE_TABLE:
        rep = check_rate_conditions(RateParams(a, b, delta), 1000, 0.1, 0.1**b)
        if rep.decay_ok is not expected or rep.decay_threshold != threshold:
            mismatches.append((a, b, delta))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and elapsed < 1.0
    report(7, ok, f"{len(RATE_TABLE) - len(mismatches)}/{len(RATE_TABLE)} rows match, {elapsed:.3f}s")
    assert ok


def test_criterion_8_instrument_calibration():
    t0 = time.perf_counter()
    passes = 0
    for seed in range(100):
        cfg = ExperimentConfig(
            model=LinearProcessModel.iid(1), regression=RegressionModel(zero_function()), x=[0.0],
            n_schedule=(1,), bandwidth=BandwidthRule("fixed", h=1.0), replicates=1000, seed=seed,
            self_test=True,
        )
        passes += run_clt_experiment(cfg, alpha=0.01).report.ks_pass
    elapsed = time.perf_counter() - t0
    ok = passes >= 99 and elapsed < 60
    report(8, ok, f"{passes}/100 master seeds pass at alpha=0.01, {elapsed:.1f}s")
    assert ok


def determinism_configs(tmp: Path) -> dict:
    FunctionalSample(np.random.default_rng(1).standard_normal((60, 2)), np.arange(60.0)).to_csv(tmp / "sample.csv")
    model = {"kind": "geometric", "d": 2, "q": 2, "rho": 0.5}
    regression = {"function": "sin", "noise_sd": 0.5}
    experiment = {"x": [0, 0], "n": [300, 600], "bandwidth": {"rule": "neighbors", "k": 40},
                  "replicates": 40, "oracle_draws": 20000}
    return {
        "simulate": {"seed": 1, "model": model, "regression": regression, "simulate": {"n": 50}},
        "estimate": {"seed": 1, "estimator": {"h_grid": [0.5, 1.0, 2.0], "kernel": "slope"},
                     "estimate": {"sample": "sample.csv", "queries": [[0, 0], [1, 1], [40, 40]]}},
        "clt": {"seed": 2, "model": model, "regression": regression, "experiment": experiment},
        "variance": {"seed": 3, "model": model, "regression": regression,
                     "experiment": dict(experiment, bandwidth={"rule": "power", "c": 2.0, "kappa": 0.2})},
        "qa-check": {"seed": 4, "model": model, "regression": regression,
                     "qa_check": {"I": [1], "J": [2, 3], "probes": 30, "mc_samples": 5000}},
        "rates": {"rates": {"a": 10, "b": 2, "delta": 0.5, "n": [1000, 10000],
                            "bandwidth": {"rule": "power", "c": 1, "kappa": 0.2}}},
    }


def test_criterion_9_manifest_replay_is_bit_identical(tmp_path):
    differing = []
    compared = 0
    for sub, cfg in determinism_configs(tmp_path).items():
        cfg_path = tmp_path / f"{sub}.yaml"
        cfg_path.write_text(yaml.safe_dump(cfg))
        first, second = tmp_path / f"{sub}-1", tmp_path / f"{sub}-2"
        assert cli_run([sub, "--config", str(cfg_path), "--out", str(first)]) == 0
        # replay from the manifest alone, from a different directory
        moved = tmp_path / f"{sub}-manifest.json"
        shutil.copy(first / "manifest.json", moved)
        assert cli_run([sub, "--config", str(moved), "--out", str(second), "--threads", "3"]) == 0
        outputs = json.loads((first / "manifest.json").read_text())["outputs"]
        for name in outputs:
            if name == "manifest.json":
                continue  # carries wall-clock timestamps and the config path
            compared += 1
            if (first / name).read_bytes() != (second / name).read_bytes():
                differing.append(f"{sub}/{name}")
    ok = not differing
    report(9, ok, f"{compared - len(differing)}/{compared} CSV/JSON outputs identical on manifest replay"
                  + (f"; differ: {differing}" if differing else ""))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
