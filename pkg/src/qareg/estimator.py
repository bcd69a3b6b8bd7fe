"""
Kernel regression with a Hilbert-valued covariate.

The estimator at a query point ``x`` is the kernel-weighted average

    r_n(x) = sum_i phi(Y_i) K(||x - X_i|| / h) / sum_i K(||x - X_i|| / h)

together with its numerator/denominator split ``g_n, f_n`` (each divided
by ``n * E K(||x - X_1|| / h)``), the truncated numerator and empirical
small-ball probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NoNeighbors, SelectionError, UsageError
from .hilbert_core import FunctionalSample, TransformSpec, as_coeffs, distances


@dataclass(frozen=True)
class KernelSpec:
    """Kernel supported on ``[0, 1]``, bounded away from zero there.

    ``c5``/``c6`` are the lower/upper bounds on ``[0, 1]`` and ``lip`` the
    Lipschitz constant on the closed unit interval.
    """

    kind: str = "box"

    def __post_init__(self):
        if self.kind not in ("box", "slope"):
            raise UsageError(f"unknown kernel {self.kind!r}; choose 'box' or 'slope'")

    @property
    def c5(self) -> float:
        return 1.0

    @property
    def c6(self) -> float:
        return 1.0 if self.kind == "box" else 2.0

    @property
    def lip(self) -> float:
        return 0.0 if self.kind == "box" else 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= 1.0)
        if self.kind == "box":
            out = inside.astype(float)
        else:
            out = np.where(inside, 2.0 - t, 0.0)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class EstimatorConfig:
    h: float
    b0: float = 5.0
    transform: TransformSpec = field(default_factory=TransformSpec.identity)
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        if not (np.isfinite(self.h) and self.h > 0):
            raise UsageError(f"bandwidth h must be positive, got {self.h}")
        if not (np.isfinite(self.b0) and self.b0 > 0):
            raise UsageError(f"truncation scale b0 must be positive, got {self.b0}")

    def with_h(self, h: float) -> "EstimatorConfig":
        return EstimatorConfig(h, self.b0, self.transform, self.kernel)

    def truncation_level(self, n: int) -> float:
        """``b_n = b0 * log(n)``."""
        if n < 2:
            raise UsageError("truncation needs n >= 2 (b_n = b0 log n vanishes at n = 1)")
        return self.b0 * float(np.log(n))


def kernel_weight(kernel: KernelSpec, dist, h: float):
    """``K(dist / h)``; the ball is closed, so ``dist == h`` keeps full weight."""
    if not h > 0:
        raise UsageError(f"bandwidth h must be positive, got {h}")
    return kernel(np.asarray(dist, dtype=float) / h)


def _weights(sample: FunctionalSample, x, cfg: EstimatorConfig) -> tuple[np.ndarray, np.ndarray]:
    dist = distances(sample.X, x)
    return kernel_weight(cfg.kernel, dist, cfg.h), dist


def _check_neighbors(w: np.ndarray, dist: np.ndarray, h: float) -> None:
    if not np.any(w > 0):
        raise NoNeighbors(float(dist.min()), h)


@dataclass(frozen=True)
class Estimate:
    """Full output of one query: the estimate and the pieces that build it."""

    r_hat: float
    n_neighbors: int
    weight_sum: float
    weighted_sum: float
    n: int


def estimate_details(sample: FunctionalSample, x, cfg: EstimatorConfig) -> Estimate:
    w, dist = _weights(sample, x, cfg)
    _check_neighbors(w, dist, cfg.h)
    py = cfg.transform(sample.y)
    num = float(np.dot(w, py))
    den = float(w.sum())
    return Estimate(num / den, int(np.count_nonzero(w)), den, num, sample.n)


def regression_estimate(sample: FunctionalSample, x, cfg: EstimatorConfig) -> float:
    """Kernel regression estimate ``r_n(x)``.

    Raises
    ------
    NoNeighbors
        If no ``X_i`` lies in the closed ball of radius ``h`` around ``x``.
    """
    return estimate_details(sample, x, cfg).r_hat


def empirical_norm(sample: FunctionalSample, x, cfg: EstimatorConfig) -> float:
    """Self-normalisation ``F_hat(h, x) * K_bar`` = mean kernel weight over the sample."""
    w, dist = _weights(sample, x, cfg)
    _check_neighbors(w, dist, cfg.h)
    return float(w.mean())


def numerator_denominator(sample: FunctionalSample, x, cfg: EstimatorConfig, norm: float) -> tuple[float, float]:
    """Return ``(g_n, f_n)`` with both sums divided by ``n * norm``.

    ``norm`` stands in for ``E K(||x - X_1|| / h)``: pass the model value in
    oracle mode or :func:`empirical_norm` otherwise.
    """
    if not (np.isfinite(norm) and norm > 0):
        raise UsageError(f"norm must be positive, got {norm}")
    w, _ = _weights(sample, x, cfg)
    scale = sample.n * norm
    g_n = float(np.dot(w, cfg.transform(sample.y))) / scale
    f_n = float(w.sum()) / scale
    return g_n, f_n


def truncated_numerator(sample: FunctionalSample, x, cfg: EstimatorConfig, norm: float) -> float:
    """Numerator ``g_n`` with terms where ``|phi(y_i)| > b0 log n`` dropped."""
    if not (np.isfinite(norm) and norm > 0):
        raise UsageError(f"norm must be positive, got {norm}")
    b_n = cfg.truncation_level(sample.n)
    w, _ = _weights(sample, x, cfg)
    py = np.asarray(cfg.transform(sample.y))
    keep = np.abs(py) <= b_n
    return float(np.dot(w[keep], py[keep])) / (sample.n * norm)


@dataclass(frozen=True)
class SmallBallEstimate:
    u_grid: np.ndarray
    F_hat: np.ndarray
    F_oracle: np.ndarray | None = None

    def ratio_to(self, phi_values) -> np.ndarray:
        """``F_hat(u, x) / phi(u)``, the empirical proxy for ``f_1(x)``."""
        return self.F_hat / np.asarray(phi_values, dtype=float)


def _check_grid(u_grid) -> np.ndarray:
    u = np.asarray(u_grid, dtype=float).reshape(-1)
    if u.size == 0:
        raise UsageError("u_grid must be nonempty")
    if np.any(u <= 0) or np.any(np.diff(u) <= 0):
        raise UsageError("u_grid must be positive and strictly increasing")
    return u


def small_ball_empirical(sample: FunctionalSample, x, u_grid, F_oracle=None) -> SmallBallEstimate:
    """Empirical ``F(u, x) = P(||x - X|| <= u)`` on ``u_grid``."""
    u = _check_grid(u_grid)
    dist = np.sort(distances(sample.X, x))
    F = np.searchsorted(dist, u, side="right") / sample.n
    oracle = None if F_oracle is None else np.asarray(F_oracle, dtype=float)
    return SmallBallEstimate(u, F, oracle)


def joint_small_ball(sample: FunctionalSample, x, u: float, max_gap: int) -> float:
    """``max_{1 <= s <= max_gap}`` of the empirical ``P(D_i <= u, D_{i+s} <= u)``."""
    if not u > 0:
        raise UsageError("u must be positive")
    if int(max_gap) < 1:
        raise UsageError("max_gap must be >= 1")
    if sample.n <= int(max_gap):
        raise UsageError(f"need n > max_gap (n={sample.n}, max_gap={max_gap})")
    inside = distances(sample.X, x) <= u
    best = 0.0
    for s in range(1, int(max_gap) + 1):
        both = inside[:-s] & inside[s:]
        best = max(best, float(both.sum()) / (sample.n - s))
    return best


@dataclass
class CVResult:
    h: float
    h_grid: np.ndarray
    losses: np.ndarray
    n_used: np.ndarray
    n_skipped: np.ndarray = field(repr=False)


def _loo_losses(sample, idx, h_grid, cfg) -> tuple[np.ndarray, np.ndarray]:
    X = sample.X
    py = np.asarray(cfg.transform(sample.y))
    diff = X[idx][:, None, :] - X[None, :, :]
    D = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    losses, used = [], []
    for h in h_grid:
        W = kernel_weight(cfg.kernel, D, h)
        W[np.arange(len(idx)), idx] = 0.0
        den = W.sum(axis=1)
        ok = den > 0
        fit = (W[ok] @ py) / den[ok]
        used.append(int(ok.sum()))
        losses.append(float(np.mean((py[idx][ok] - fit) ** 2)) if ok.any() else np.inf)
    return np.array(losses), np.array(used)


def cross_validate_bandwidth(
    sample: FunctionalSample,
    x_eval_set: Sequence[int] | None,
    h_grid: Sequence[float],
    cfg: EstimatorConfig,
) -> CVResult:
    """Leave-one-out bandwidth selection over ``h_grid``.

    The loss for each ``h`` is the mean of ``(phi(y_i) - r_n^{(-i)}(X_i))^2``
    over the indices in ``x_eval_set`` (all indices if ``None``) at which
    the leave-one-out fit is defined. Ties go to the smaller bandwidth.
    """
    grid = np.asarray(h_grid, dtype=float).reshape(-1)
    if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise UsageError("h_grid must be nonempty with positive entries")
    idx = np.arange(sample.n) if x_eval_set is None else np.asarray(list(x_eval_set), dtype=int)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= sample.n:
        raise UsageError("x_eval_set must hold valid sample indices")
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    losses, used = _loo_losses(sample, idx, grid, cfg)
    if not np.any(used > 0):
        raise SelectionError("every bandwidth in the grid leaves all evaluation points without neighbours")
    best = int(np.argmin(losses))  # first minimum is the smallest h
    return CVResult(float(grid[best]), grid, losses, used, idx.size - used)
