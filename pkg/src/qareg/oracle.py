"""
Model-side truths for the Gaussian moving-average simulators.

Everything here is computed from the known model rather than from a
sample: the exact small-ball probability ``F(h, x)``, the regression
function ``E[phi(Y) | X = x]``, the kernel moments ``E K^j`` and the
numerator/denominator moments that determine the variance of
``sqrt(n phi(h)) (r_n(x) - r(x))`` at a fixed bandwidth.

The small-ball function is taken to be ``phi(u) := F(u, x)`` itself, so
``f_1(x) = 1``. Near zero ``F(u, x)`` behaves like ``u^d`` for any
non-degenerate Gaussian, which fixes the kernel constants ``C_1, C_2``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special, stats

from .asymptotics import SmallBallFunction, compute_cj
from .errors import UsageError
from .estimator import KernelSpec
from .hilbert_core import TransformSpec, as_coeffs
from .process_sim import LinearProcessModel, RegressionModel, _hermite, conditional_response_law

DEFAULT_DRAWS = 200_000
SMALL_BALL_MC_DRAWS = 1_000_000


def _isotropic_scale(model: LinearProcessModel) -> float | None:
    if not model.is_isotropic():
        return None
    return float(np.sqrt(model.marginal_cov[0, 0]))


def _chi2(model: LinearProcessModel, x: np.ndarray):
    s = _isotropic_scale(model)
    nc = float(x @ x) / s**2
    dist = stats.chi2(model.d) if nc == 0 else stats.ncx2(model.d, nc)
    return dist, s


@lru_cache(maxsize=64)
def _mc_distances(weights_bytes: bytes, shape: tuple, x_bytes: bytes, draws: int, seed: int) -> np.ndarray:
    a = np.frombuffer(weights_bytes).reshape(shape)
    model = LinearProcessModel(a)
    x = np.frombuffer(x_bytes)
    L = np.linalg.cholesky(model.marginal_cov)
    Z = np.random.default_rng(seed).standard_normal((draws, model.d)) @ L.T
    return np.sort(np.linalg.norm(Z - x, axis=1))


def _sorted_mc_distances(model, x, draws, seed) -> np.ndarray:
    return _mc_distances(model.weights.tobytes(), model.weights.shape, np.ascontiguousarray(x).tobytes(), draws, seed)


def small_ball_probability(model: LinearProcessModel, x, u, draws: int = SMALL_BALL_MC_DRAWS, seed: int = 0):
    """``F(u, x) = P(||X_1 - x|| <= u)``.

    Exact (non-central chi-square) for isotropic marginals; otherwise a
    cached Monte Carlo estimate over ``draws`` model draws.
    """
    x = as_coeffs(x).astype(float)
    if x.size != model.d:
        raise UsageError(f"query has dimension {x.size}, model has d={model.d}")
    u = np.asarray(u, dtype=float)
    if _isotropic_scale(model) is not None:
        dist, s = _chi2(model, x)
        out = dist.cdf((u / s) ** 2)
    else:
        d = _sorted_mc_distances(model, x, draws, seed)
        out = np.searchsorted(d, u, side="right") / d.size
    return float(out) if np.ndim(out) == 0 else out


def small_ball_quantile(model: LinearProcessModel, x, p: float, draws: int = SMALL_BALL_MC_DRAWS, seed: int = 0) -> float:
    """Radius ``h`` with ``F(h, x) = p``."""
    if not 0 < p < 1:
        raise UsageError("probability must lie in (0, 1)")
    x = as_coeffs(x).astype(float)
    if _isotropic_scale(model) is not None:
        dist, s = _chi2(model, x)
        h = s * np.sqrt(dist.ppf(p))
        # polish so that the exact cdf matches p to rounding
        return float(optimize.brentq(lambda t: dist.cdf((t / s) ** 2) - p, 0.5 * h, 2.0 * h, xtol=1e-14))
    d = _sorted_mc_distances(model, x, draws, seed)
    return float(np.quantile(d, p))


def conditional_moments(transform: TransformSpec, mean, sd: float) -> tuple[np.ndarray, np.ndarray]:
    """``E[phi(Y)]`` and ``E[phi(Y)^2]`` for ``Y ~ N(mean, sd^2)``, elementwise in ``mean``."""
    mean = np.asarray(mean, dtype=float)
    if transform.kind == "identity":
        return mean, mean * mean + sd * sd
    z, w = _hermite()
    vals = np.asarray(transform(mean[..., None] + sd * z), dtype=float)
    return vals @ w, (vals * vals) @ w


def true_regression(model: LinearProcessModel, reg: RegressionModel, transform: TransformSpec, x) -> tuple[float, float]:
    """``(r(x), g_2(x))`` with ``r(x) = E[phi(Y)|X = x]`` and ``g_2(x) = E[phi(Y)^2|X = x]``."""
    mean, sd = conditional_response_law(model, reg, as_coeffs(x)[None])
    m1, m2 = conditional_moments(transform, mean, sd)
    return float(m1[0]), float(m2[0])


def kernel_constants(kernel: KernelSpec, d: int) -> tuple[float, float]:
    sb = SmallBallFunction.power(d)
    return compute_cj(kernel, sb, 1), compute_cj(kernel, sb, 2)


@dataclass(frozen=True)
class OracleQuantities:
    """Model truths at one query point and bandwidth.

    ``sigma*_finite`` are the exact single-observation variances
    ``phi_h Var(Gamma_1) / (E Delta_1)^2`` at this ``h``; ``sigma*_limit``
    are the ``h -> 0`` limits ``(C_2 / C_1^2) g_2(x)`` and
    ``(C_2 / C_1^2) (g_2(x) - r(x)^2)`` (with ``f_1 = 1``).
    """

    h: float
    phi_h: float
    phi_exact: bool
    e_delta: float
    e_delta_sq: float
    e_gamma: float
    e_gamma_sq: float
    r_x: float
    g2_x: float
    c1: float
    c2: float
    sigma1_sq_finite: float
    sigma2_sq_finite: float
    sigma1_sq_limit: float
    sigma2_sq_limit: float
    draws: int

    def to_dict(self) -> dict:
        return asdict(self)


def _gaussian_logpdf(U: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, U.T)
    d = cov.shape[0]
    return -0.5 * np.sum(sol * sol, axis=0) - np.sum(np.log(np.diag(L))) - 0.5 * d * np.log(2 * np.pi)


def oracle_quantities(
    model: LinearProcessModel,
    reg: RegressionModel,
    x,
    h: float,
    kernel: KernelSpec = KernelSpec(),
    transform: TransformSpec = TransformSpec.identity(),
    draws: int = DEFAULT_DRAWS,
    seed=0,
) -> OracleQuantities:
    """Kernel and response moments at ``(x, h)`` by Monte Carlo over the ball.

    Draws are uniform in the closed ball ``B(x, h)`` and weighted by the
    Gaussian marginal density, so every draw contributes (the kernel is zero
    outside the ball).
    """
    if not h > 0:
        raise UsageError("h must be positive")
    x = as_coeffs(x).astype(float)
    d = model.d
    if x.size != d:
        raise UsageError(f"query has dimension {x.size}, model has d={d}")
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal((draws, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.uniform(size=draws) ** (1.0 / d)
    U = x + h * radius[:, None] * direction
    log_vol = 0.5 * d * np.log(np.pi) - special.gammaln(0.5 * d + 1.0) + d * np.log(h)
    dens = np.exp(_gaussian_logpdf(U, model.marginal_cov) + log_vol)

    K = kernel(radius)
    mean, sd = conditional_response_law(model, reg, U)
    m1, m2 = conditional_moments(transform, mean, sd)
    r_x, g2_x = true_regression(model, reg, transform, x)

    e_delta = float(np.mean(dens * K))
    e_delta_sq = float(np.mean(dens * K * K))
    e_gamma = float(np.mean(dens * K * m1))
    e_gamma_sq = float(np.mean(dens * K * K * m2))
    e_cross = float(np.mean(dens * K * K * m1))

    phi_exact = _isotropic_scale(model) is not None
    phi_h = small_ball_probability(model, x, h) if phi_exact else float(np.mean(dens))

    var1 = e_gamma_sq - e_gamma**2
    second2 = e_gamma_sq - 2.0 * r_x * e_cross + r_x**2 * e_delta_sq
    var2 = second2 - (e_gamma - r_x * e_delta) ** 2
    c1, c2 = kernel_constants(kernel, d)
    k = c2 / c1**2
    return OracleQuantities(
        h=float(h),
        phi_h=float(phi_h),
        phi_exact=phi_exact,
        e_delta=e_delta,
        e_delta_sq=e_delta_sq,
        e_gamma=e_gamma,
        e_gamma_sq=e_gamma_sq,
        r_x=r_x,
        g2_x=g2_x,
        c1=c1,
        c2=c2,
        sigma1_sq_finite=phi_h * var1 / e_delta**2,
        sigma2_sq_finite=phi_h * var2 / e_delta**2,
        sigma1_sq_limit=k * g2_x,
        sigma2_sq_limit=k * max(g2_x - r_x**2, 0.0),
        draws=int(draws),
    )
