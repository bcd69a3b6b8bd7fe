import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from qareg.errors import ExperimentError, UsageError
from qareg.montecarlo import (
    BandwidthRule,
    ExperimentConfig,
    ks_normal_distance,
    ks_threshold,
    normality_report,
    replicate_seed,
    run_clt_experiment,
    run_variance_experiment,
    write_clt_outputs,
    write_variance_outputs,
)
from qareg.process_sim import LinearProcessModel, RegressionModel, sin_function, zero_function


def clt_config(**kw):
    base = dict(
        model=LinearProcessModel.iid(3),
        regression=RegressionModel(sin_function(), 0.5),
        x=[0.0, 0.0, 0.0],
        n_schedule=(400,),
        bandwidth=BandwidthRule("neighbors", k=40),
        replicates=40,
        seed=11,
        oracle_draws=20_000,
        bootstrap=50,
        threads=1,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_ks_point_mass():
    assert ks_normal_distance(np.zeros(100)) == 0.5


@pytest.mark.parametrize("M", [10, 500, 1000])
def test_ks_of_exact_quantiles(M):
    v = special.ndtri((np.arange(1, M + 1) - 0.5) / M)
    assert ks_normal_distance(v) == pytest.approx(0.5 / M, rel=1e-9)


def test_ks_seeded_normal_sample():
    v = np.random.default_rng(3).standard_normal(10_000)
    assert ks_normal_distance(v) < ks_threshold(10_000)


def test_ks_agrees_with_scipy(rng):
    for _ in range(20):
        v = rng.standard_t(5, size=300)
        assert ks_normal_distance(v) == pytest.approx(stats.kstest(v, "norm").statistic, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=2, max_size=200), st.randoms())
def test_ks_is_permutation_invariant(values, r):
    shuffled = list(values)
    r.shuffle(shuffled)
    assert ks_normal_distance(values) == ks_normal_distance(shuffled)


def test_ks_threshold():
    assert ks_threshold(500) == pytest.approx(1.63 / np.sqrt(500))
    with pytest.raises(UsageError):
        ks_threshold(500, 0.2)


def test_replicate_seeds_are_distinct_streams():
    a = np.random.default_rng(replicate_seed(1, 0, 5)).random()
    b = np.random.default_rng(replicate_seed(1, 0, 6)).random()
    c = np.random.default_rng(replicate_seed(1, 1, 5)).random()
    assert len({a, b, c}) == 3
    assert a == np.random.default_rng(replicate_seed(1, 0, 5)).random()


def test_self_test_mode_passes():
    res = run_clt_experiment(clt_config(self_test=True, replicates=1000))
    assert res.report.M == 1000
    assert res.report.ks_distance < 1.63 / np.sqrt(1000)
    assert all(r["status"] == "self-test" for r in res.rows)


def test_identical_replicates_are_flagged_degenerate():
    cfg = clt_config(regression=RegressionModel(zero_function(), 0.0), replicates=20)
    rep = run_clt_experiment(cfg).report
    assert np.all(rep.stats == 0.0)
    assert rep.ks_distance == 0.5
    assert rep.degenerate


def test_clt_determinism_and_thread_independence():
    a = run_clt_experiment(clt_config(threads=1))
    b = run_clt_experiment(clt_config(threads=4))
    assert a.rows == b.rows
    assert np.array_equal(a.report.stats, b.report.stats)


def test_clt_with_too_few_neighbours_fails():
    cfg = clt_config(bandwidth=BandwidthRule("fixed", h=0.05))
    with pytest.raises(ExperimentError):
        run_clt_experiment(cfg)


def test_empirical_normalisation_runs():
    res = run_clt_experiment(clt_config(normalization="empirical", n_schedule=(300, 600)))
    assert len(res.stages) == 2 and res.stages[1].n == 600
    assert res.stages[0].plugin_report is not None


def test_variance_smoke_with_two_replicates():
    cfg = clt_config(replicates=2, bandwidth=BandwidthRule("power", c=2.0, kappa=0.2), n_schedule=(200, 400))
    rep = run_variance_experiment(cfg)
    for st_ in rep.stages:
        lo, hi = st_.ci1
        assert hi - lo > 0.5 * st_.ratio1 or st_.ratio1 == 0
    assert rep.sigma1_moves_toward_one in (True, False)


def test_ratios_coincide_when_regression_vanishes():
    cfg = clt_config(regression=RegressionModel(zero_function(), 0.5), bandwidth=BandwidthRule("fixed", h=1.0))
    st_ = run_variance_experiment(cfg).stages[0]
    assert st_.truth == 0.0
    assert st_.ratio1 == st_.ratio2


def test_variance_needs_oracle_normalisation():
    with pytest.raises(UsageError):
        run_variance_experiment(clt_config(normalization="empirical"))


def test_config_validation():
    with pytest.raises(UsageError):
        clt_config(n_schedule=(500, 100))
    with pytest.raises(UsageError):
        clt_config(replicates=1)
    with pytest.raises(UsageError):
        clt_config(x=[0.0, 0.0])
    with pytest.raises(UsageError):
        BandwidthRule("neighbors", k=0)


def test_normality_report_moments(rng):
    v = rng.standard_normal(2000)
    rep = normality_report(v)
    assert rep.mean == pytest.approx(v.mean())
    assert rep.variance == pytest.approx(v.var(ddof=1))
    assert rep.qq_pairs.shape == (2000, 2)
    assert np.all(np.diff(rep.qq_pairs[:, 1]) >= 0)


def test_writers_emit_lf_csv_and_json(tmp_path):
    res = run_clt_experiment(clt_config(replicates=10))
    paths = write_clt_outputs(res, tmp_path)
    assert [p.name for p in paths] == ["stats.csv", "report.json", "qq.csv"]
    text = (tmp_path / "stats.csv").read_bytes()
    assert b"\r" not in text
    assert text.splitlines()[0] == b"replicate,n,h,r_hat,statistic_oracle,statistic_plugin,status"
    assert len(text.splitlines()) == 11
    vr = run_variance_experiment(clt_config(replicates=5))
    names = [p.name for p in write_variance_outputs(vr, tmp_path)]
    assert names == ["stats.csv", "report.json"]
