import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qareg.errors import NoNeighbors, SelectionError, UsageError
from qareg.estimator import (
    EstimatorConfig,
    KernelSpec,
    cross_validate_bandwidth,
    empirical_norm,
    joint_small_ball,
    kernel_weight,
    numerator_denominator,
    regression_estimate,
    small_ball_empirical,
    truncated_numerator,
)
from qareg.hilbert_core import FunctionalSample, HilbertVector, TransformSpec
from qareg.oracle import oracle_quantities
from qareg.process_sim import LinearProcessModel, RegressionModel, simulate, sin_function, square_clip_function

BOX, SLOPE = KernelSpec("box"), KernelSpec("slope")


def line_sample(dists, ys):
    """Points on the first axis at the given distances from the origin."""
    X = np.zeros((len(dists), 2))
    X[:, 0] = dists
    return FunctionalSample(X, np.asarray(ys, dtype=float))


@pytest.mark.parametrize("kernel,dist,expected", [(BOX, 0.5, 1.0), (BOX, 1.5, 0.0), (SLOPE, 0.5, 1.5)])
def test_kernel_weight_examples(kernel, dist, expected):
    assert kernel_weight(kernel, dist, 1.0) == expected


def test_ball_is_closed():
    assert kernel_weight(BOX, 2.0, 2.0) == 1.0
    assert kernel_weight(SLOPE, 2.0, 2.0) == 1.0


def test_kernel_constants():
    assert (BOX.c5, BOX.c6, BOX.lip) == (1.0, 1.0, 0.0)
    assert (SLOPE.c5, SLOPE.c6, SLOPE.lip) == (1.0, 2.0, 1.0)
    with pytest.raises(UsageError):
        KernelSpec("epanechnikov")


def test_single_point():
    s = FunctionalSample(np.array([[0.3, 0.4]]), np.array([2.5]))
    assert regression_estimate(s, [0.0, 0.0], EstimatorConfig(0.5)) == 2.5


def test_box_local_average():
    s = line_sample([0.1, 0.2, 5.0], [1.0, 3.0, 100.0])
    assert regression_estimate(s, [0.0, 0.0], EstimatorConfig(1.0)) == 2.0


def test_slope_weighted_average():
    s = line_sample([0.0, 1.0], [0.0, 1.0])
    r = regression_estimate(s, [0.0, 0.0], EstimatorConfig(1.0, kernel=SLOPE))
    assert r == pytest.approx((2 * 0 + 1 * 1) / (2 + 1), abs=1e-15)


def test_no_neighbors_carries_min_distance():
    s = line_sample([3.0, 4.0], [1.0, 2.0])
    with pytest.raises(NoNeighbors) as info:
        regression_estimate(s, [0.0, 0.0], EstimatorConfig(1.0))
    assert info.value.min_distance == 3.0 and info.value.h == 1.0


def test_numerator_denominator_single_point():
    s = line_sample([0.1, 9.0, 9.0, 9.0], [2.0, 1.0, 1.0, 1.0])
    g, f = numerator_denominator(s, [0.0, 0.0], EstimatorConfig(1.0), 1.0)
    assert (g, f) == (2.0 / 4, 1.0 / 4)


def random_sample(rng, n, d):
    return FunctionalSample(rng.standard_normal((n, d)), rng.standard_normal(n))


def test_ratio_identity_and_norm_independence(rng):
    for _ in range(50):
        s = random_sample(rng, 40, 3)
        cfg = EstimatorConfig(1.5, kernel=SLOPE)
        x = np.zeros(3)
        r = regression_estimate(s, x, cfg)
        for norm in (1e-3, 0.7, 42.0):
            g, f = numerator_denominator(s, x, cfg, norm)
            assert abs(g / f - r) <= 1e-12 * max(1, abs(r))


def test_empirical_norm_makes_f_one(rng):
    s = random_sample(rng, 60, 2)
    cfg = EstimatorConfig(1.0, kernel=SLOPE)
    _, f = numerator_denominator(s, [0, 0], cfg, empirical_norm(s, [0, 0], cfg))
    assert f == pytest.approx(1.0, abs=1e-14)


@pytest.mark.slow
def test_oracle_norm_gives_unbiased_denominator():
    model = LinearProcessModel.iid(2)
    reg = RegressionModel(sin_function(), 0.5)
    x, h = np.array([0.3, 0.0]), 0.5
    cfg = EstimatorConfig(h, kernel=SLOPE)
    # E Delta_1 by plain model draws, independent of the importance-sampling oracle
    Z = np.random.default_rng(1).standard_normal((1_000_000, 2))
    K = kernel_weight(SLOPE, np.linalg.norm(Z - x, axis=1), h)
    e_delta = float(K.mean())
    rel_se_norm = K.std() / np.sqrt(K.size) / e_delta
    oq = oracle_quantities(model, reg, x, h, SLOPE, draws=200_000, seed=2)
    assert oq.e_delta == pytest.approx(e_delta, rel=0.01)
    f = np.array([numerator_denominator(simulate(model, reg, 500, seed=k), x, cfg, e_delta)[1] for k in range(400)])
    assert abs(f.mean() - 1.0) < 3 * np.hypot(f.std(ddof=1) / np.sqrt(f.size), rel_se_norm)


def test_truncation():
    s = line_sample([0.1, 0.2, 0.3], [1.0, -2.0, 3.0])
    cfg = EstimatorConfig(1.0, b0=5.0)
    assert truncated_numerator(s, [0, 0], cfg, 1.0) == numerator_denominator(s, [0, 0], cfg, 1.0)[0]
    b_n = cfg.truncation_level(3)
    one = line_sample([0.1, 5.0], [10 * b_n, 0.0])
    assert truncated_numerator(one, [0, 0], EstimatorConfig(1.0, b0=5.0), 1.0) == 0.0


def test_truncation_mixed_sample(rng):
    s = FunctionalSample(rng.standard_normal((200, 2)) * 0.5, rng.standard_normal(200) * 5)
    cfg = EstimatorConfig(0.8, b0=1.0)
    b_n = np.log(200)
    total = 0.0
    for xi, yi in s.records():
        if np.linalg.norm(xi.coeffs) <= 0.8 and abs(yi) <= b_n:
            total += yi
    assert truncated_numerator(s, [0, 0], cfg, 1.0) == pytest.approx(total / 200, abs=1e-14)


def test_truncation_vanishes_for_large_b0(rng):
    s = random_sample(rng, 30, 2)
    cfg = EstimatorConfig(2.0, b0=1e6)
    assert truncated_numerator(s, [0, 0], cfg, 0.3) == numerator_denominator(s, [0, 0], cfg, 0.3)[0]
    with pytest.raises(UsageError):
        EstimatorConfig(1.0).truncation_level(1)


def test_small_ball_examples():
    s = line_sample([0.1, 0.2, 0.3], [0, 0, 0])
    sb = small_ball_empirical(s, [0, 0], [0.05, 0.25, 1.0])
    np.testing.assert_array_equal(sb.F_hat, [0.0, 2 / 3, 1.0])
    np.testing.assert_allclose(sb.ratio_to([0.5, 1.0, 2.0]), [0.0, 2 / 3, 0.5])
    with pytest.raises(UsageError):
        small_ball_empirical(s, [0, 0], [0.3, 0.2])


def test_joint_small_ball_iid_factorises():
    s = simulate(LinearProcessModel.iid(2), RegressionModel(sin_function()), 100_000, seed=3)
    F = small_ball_empirical(s, [0, 0], [1.0]).F_hat[0]
    J = joint_small_ball(s, [0, 0], 1.0, 1)
    assert abs(J - F * F) < 4 * np.sqrt(F * F * (1 - F * F) / 1e5)


def test_joint_small_ball_tiny_radius():
    s = simulate(LinearProcessModel.iid(2), RegressionModel(sin_function()), 200, seed=3)
    assert joint_small_ball(s, [10, 10], 1e-3, 3) == 0.0


def test_joint_small_ball_ma1_between_bounds():
    model = LinearProcessModel.geometric(2, 1, 0.9)
    s = simulate(model, RegressionModel(sin_function()), 50_000, seed=4)
    F = small_ball_empirical(s, [0, 0], [1.0]).F_hat[0]
    J = joint_small_ball(s, [0, 0], 1.0, 2)
    inside = np.linalg.norm(s.X, axis=1) <= 1.0
    brute = max(np.mean(inside[:-k] & inside[k:]) for k in (1, 2))
    assert J == brute
    assert F * F < J < F


def test_cv_single_element_grid(rng):
    s = random_sample(rng, 30, 2)
    assert cross_validate_bandwidth(s, None, [0.7], EstimatorConfig(1.0)).h == 0.7


def test_cv_constant_response_picks_smallest_feasible_h():
    X = np.array([[0.0, 0.0], [0.3, 0.0], [0.0, 0.3], [0.3, 0.3]])
    s = FunctionalSample(X, np.full(4, 2.0))
    res = cross_validate_bandwidth(s, None, [2.0, 0.1, 0.5, 1.0], EstimatorConfig(1.0))
    assert res.h == 0.5  # 0.1 leaves every point alone
    with pytest.raises(SelectionError):
        cross_validate_bandwidth(s, None, [0.1], EstimatorConfig(1.0))


def brute_cv(sample, grid, kernel):
    out = []
    for h in grid:
        errs = []
        for i in range(sample.n):
            num = den = 0.0
            for j in range(sample.n):
                if j == i:
                    continue
                w = kernel(np.linalg.norm(sample.X[i] - sample.X[j]) / h)
                num += w * sample.y[j]
                den += w
            if den > 0:
                errs.append((sample.y[i] - num / den) ** 2)
        out.append(np.mean(errs) if errs else np.inf)
    return np.array(out)


def test_cv_matches_brute_force():
    model = LinearProcessModel.iid(2)
    s = simulate(model, RegressionModel(square_clip_function(), 0.5), 150, seed=6)
    grid = [0.2, 0.5, 1.0, 2.0]
    for kernel in (BOX, SLOPE):
        res = cross_validate_bandwidth(s, None, grid, EstimatorConfig(1.0, kernel=kernel))
        brute = brute_cv(s, grid, kernel)
        np.testing.assert_allclose(res.losses, brute, rtol=1e-12)
        assert res.h == grid[int(np.argmin(brute))]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.integers(1, 5))
def test_estimate_properties(seed, n, d):
    rng = np.random.default_rng(seed)
    s = random_sample(rng, n, d)
    x = s.X[0] + 0.1 * rng.standard_normal(d)
    cfg = EstimatorConfig(1.0 + rng.uniform(), kernel=SLOPE if seed % 2 else BOX)
    try:
        r = regression_estimate(s, x, cfg)
    except NoNeighbors:
        return
    inside = np.linalg.norm(s.X - x, axis=1) <= cfg.h
    tol = 1e-12 * max(1.0, np.abs(s.y).max())
    assert s.y[inside].min() - tol <= r <= s.y[inside].max() + tol
    scaled = EstimatorConfig(cfg.h, kernel=cfg.kernel, transform=TransformSpec.custom("x3", 3.0, lambda v: 3.0 * v))
    assert regression_estimate(s, x, scaled) == pytest.approx(3 * r, rel=1e-12, abs=1e-12)
    perm = rng.permutation(n)
    assert regression_estimate(s.take(perm), x, cfg) == pytest.approx(r, rel=1e-12, abs=1e-12)


def test_query_accepts_hilbert_vector():
    s = line_sample([0.1], [4.0])
    assert regression_estimate(s, HilbertVector([0.0, 0.0]), EstimatorConfig(1.0)) == 4.0


def test_clip_transform_is_applied():
    s = line_sample([0.1, 0.2], [10.0, -1.0])
    assert regression_estimate(s, [0, 0], EstimatorConfig(1.0, transform=TransformSpec.clip(3.0))) == 1.0
