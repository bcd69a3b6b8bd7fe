"""
Gaussian moving-average simulators with a known regression function.

Covariates follow a finite-order vector moving average

    X_i = sum_{m=0}^{q} a_m eps_{i-m},   eps_i iid N(0, I_d)

and responses are ``Y_i = r(X_i) + theta * eps_{i,1} + eta_i`` where the
``theta`` term is only present in ``"shared"`` noise mode. Every population
quantity used downstream (lag covariances, dependence coefficients,
conditional laws) has an exact closed form or a one/two-dimensional
Gauss-Hermite expression, which is what makes these models useful as
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .dependence import DependenceCoefficients, lambda_tail
from .errors import UsageError
from .hilbert_core import FunctionalSample, as_coeffs

GH_NODES = 96


@lru_cache(maxsize=None)
def _hermite(n: int = GH_NODES) -> tuple[np.ndarray, np.ndarray]:
    # probabilists' nodes, weights normalised to a N(0,1) expectation
    z, w = np.polynomial.hermite_e.hermegauss(n)
    return z, w / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinearProcessModel:
    """Vector MA(q) process; ``weights`` has shape ``(q + 1, d, d)``."""

    weights: np.ndarray

    def __post_init__(self):
        a = np.array(self.weights, dtype=float)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3 or a.shape[1] != a.shape[2] or a.shape[1] < 1:
            raise UsageError("weights must be a sequence of square d x d matrices")
        if not np.all(np.isfinite(a)):
            raise UsageError("weights must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "weights", a)

    @classmethod
    def iid(cls, d: int, scale: float = 1.0) -> "LinearProcessModel":
        return cls(scale * np.eye(d)[None])

    @classmethod
    def geometric(cls, d: int, q: int, rho: float, scale: float = 1.0) -> "LinearProcessModel":
        """``a_m = scale * rho**m * I`` for ``m = 0..q``."""
        if q < 0:
            raise UsageError("order q must be >= 0")
        return cls(np.stack([scale * rho**m * np.eye(d) for m in range(q + 1)]))

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def q(self) -> int:
        return self.weights.shape[0] - 1

    def lag_cov(self, s: int) -> np.ndarray:
        """``Cov(X_i, X_{i+s}) = sum_m a_m a_{m+s}^T`` (entry ``[k, l]`` pairs X_i^k with X_{i+s}^l)."""
        s = int(s)
        if s < 0:
            return self.lag_cov(-s).T
        a = self.weights
        out = np.zeros((self.d, self.d))
        for m in range(self.q + 1 - s):
            out += a[m] @ a[m + s].T
        return out

    @property
    def marginal_cov(self) -> np.ndarray:
        return self.lag_cov(0)

    def is_isotropic(self) -> bool:
        S = self.marginal_cov
        return bool(np.allclose(S, S[0, 0] * np.eye(self.d), rtol=0, atol=1e-14 * max(1.0, S[0, 0])))

    def describe(self) -> dict:
        return {"d": self.d, "q": self.q, "weights": self.weights.tolist()}


@dataclass(frozen=True)
class RegressionFunction:
    """A regression function of one projection ``t = <w, x>``.

    ``profile`` maps ``t`` to ``r``. ``beta`` and ``c7`` record a valid
    Hölder exponent and constant for ``x -> profile(<w, x>)``.
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    beta: float
    c7: float
    coef: float = 1.0
    direction: tuple[float, ...] | None = None

    def projection(self, d: int) -> np.ndarray:
        if self.direction is None:
            w = np.zeros(d)
            w[0] = 1.0
            return w
        w = np.asarray(self.direction, dtype=float)
        if w.size != d:
            raise UsageError(f"regression direction has length {w.size}, model has d={d}")
        return w

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        w = self.projection(X.shape[-1])
        return np.asarray(self.profile(X @ w), dtype=float)

    def evaluate(self, x) -> float:
        return float(self(as_coeffs(x)[None])[0])

    def describe(self) -> dict:
        out = {"name": self.name, "beta": self.beta, "c7": self.c7}
        if self.name == "linear":
            out["coef"] = self.coef
        if self.direction is not None:
            out["direction"] = list(self.direction)
        return out


def zero_function() -> RegressionFunction:
    return RegressionFunction("zero", lambda t: np.zeros_like(t), beta=1.0, c7=1.0)


def linear_function(coef: float = 1.0, direction: Sequence[float] | None = None) -> RegressionFunction:
    scale = 1.0 if direction is None else float(np.linalg.norm(direction))
    return RegressionFunction(
        "linear", lambda t: coef * t, beta=1.0, c7=max(abs(coef) * scale, 1e-300),
        coef=coef, direction=None if direction is None else tuple(direction),
    )


def sin_function() -> RegressionFunction:
    return RegressionFunction("sin", np.sin, beta=1.0, c7=1.0)


def square_clip_function() -> RegressionFunction:
    # min(t^2, 10) has slope at most 2*sqrt(10)
    return RegressionFunction("square_clip", lambda t: np.minimum(t * t, 10.0), beta=1.0, c7=2.0 * np.sqrt(10.0))


REGRESSION_MENU: dict[str, Callable[..., RegressionFunction]] = {
    "zero": zero_function,
    "linear": linear_function,
    "sin": sin_function,
    "square_clip": square_clip_function,
}


@dataclass(frozen=True)
class RegressionModel:
    r_true: RegressionFunction
    noise_sd: float = 0.0
    noise_mode: str = "independent"
    theta: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.noise_sd) and self.noise_sd >= 0):
            raise UsageError("noise_sd must be finite and >= 0")
        if self.noise_mode not in ("independent", "shared"):
            raise UsageError(f"noise_mode must be 'independent' or 'shared', got {self.noise_mode!r}")
        if not np.isfinite(self.theta):
            raise UsageError("theta must be finite")

    @property
    def shared_theta(self) -> float:
        return self.theta if self.noise_mode == "shared" else 0.0

    def describe(self) -> dict:
        return {
            "function": self.r_true.describe(),
            "noise_sd": self.noise_sd,
            "noise_mode": self.noise_mode,
            "theta": self.theta,
        }


def _moving_average(eps: np.ndarray, weights: np.ndarray, length: int) -> np.ndarray:
    # eps[..., t, :] is the innovation at time t - q
    q = weights.shape[0] - 1
    X = eps[..., q:q + length, :] @ weights[0].T
    for m in range(1, q + 1):
        X = X + eps[..., q - m:q - m + length, :] @ weights[m].T
    return X


def _responses(X, eps_now, eta, reg: RegressionModel) -> np.ndarray:
    y = reg.r_true(X) + reg.noise_sd * eta
    if reg.noise_mode == "shared":
        y = y + reg.theta * eps_now[..., 0]
    return y


def simulate(model: LinearProcessModel, reg: RegressionModel, n: int, seed) -> FunctionalSample:
    """Draw a stationary sample of length ``n``; bit-for-bit reproducible given ``seed``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if int(n) < 1:
        raise UsageError("n must be >= 1")
    n = int(n)
    rng = np.random.default_rng(seed)
    q, d = model.q, model.d
    eps = rng.standard_normal((n + q, d))
    eta = rng.standard_normal(n)
    X = _moving_average(eps, model.weights, n)
    y = _responses(X, eps[q:], eta, reg)
    return FunctionalSample(X, y)


def simulate_paths(model: LinearProcessModel, reg: RegressionModel, length: int, n_paths: int, rng) -> np.ndarray:
    """Independent sample paths ``Z_1..Z_length`` stacked as ``(n_paths, length, d + 1)``.

    The last coordinate of each ``Z_i`` is ``Y_i``.
    """
    rng = np.random.default_rng(rng)
    q, d = model.q, model.d
    eps = rng.standard_normal((n_paths, length + q, d))
    eta = rng.standard_normal((n_paths, length))
    X = _moving_average(eps, model.weights, length)
    y = _responses(X, eps[:, q:], eta, reg)
    return np.concatenate([X, y[..., None]], axis=-1)


def _stein_factor(reg: RegressionModel, v: float) -> float:
    """``E[t r(t)] / v`` for ``t ~ N(0, v)``, i.e. the slope of Cov(A, r(t)) in Cov(A, t)."""
    if v <= 0:
        return 0.0
    z, w = _hermite()
    t = np.sqrt(v) * z
    return float(np.sum(w * t * reg.r_true.profile(t)) / v)


def _profile_cov(reg: RegressionModel, v: float, c: float) -> float:
    """``Cov(r(U), r(V))`` for centred jointly Gaussian ``U, V`` with variance ``v``, covariance ``c``."""
    if v <= 0 or c == 0:
        return 0.0
    rho = float(np.clip(c / v, -1.0, 1.0))
    z, w = _hermite()
    sd = np.sqrt(v)
    U = sd * z[:, None]
    V = sd * (rho * z[:, None] + np.sqrt(1.0 - rho * rho) * z[None, :])
    prof = reg.r_true.profile
    W = w[:, None] * w[None, :]
    joint = float(np.sum(W * prof(U) * prof(V)))
    mean = float(np.sum(w * prof(sd * z)))
    return joint - mean * mean


def lag_cross_cov(model: LinearProcessModel, reg: RegressionModel, s: int) -> np.ndarray:
    """Exact ``Cov(Z_i, Z_{i+s})`` for ``Z = (X, Y)``, shape ``(d + 1, d + 1)``, ``s >= 0``."""
    s = int(s)
    if s < 0:
        raise UsageError("lag must be >= 0")
    d, q = model.d, model.q
    a = model.weights
    w = reg.r_true.projection(d)
    Cs = model.lag_cov(s)
    v = float(w @ model.marginal_cov @ w)
    kappa = _stein_factor(reg, v)
    theta = reg.shared_theta
    first_col = lambda m: a[m][:, 0] if m <= q else np.zeros(d)  # Cov(eps_{i,1}, X_{i+m})

    out = np.zeros((d + 1, d + 1))
    out[:d, :d] = Cs
    # X_i against Y_{i+s}
    out[:d, d] = kappa * (Cs @ w) + (theta * a[0][:, 0] if s == 0 else 0.0)
    # Y_i against X_{i+s}
    out[d, :d] = kappa * (w @ Cs) + theta * first_col(s)
    yy = _profile_cov(reg, v, float(w @ Cs @ w))
    yy += theta * kappa * float(w @ first_col(s))
    if s == 0:
        yy += theta * kappa * float(w @ a[0][:, 0]) + theta**2 + reg.noise_sd**2
    out[d, d] = yy
    return out


def theoretical_lambda(model: LinearProcessModel, reg: RegressionModel, max_lag: int) -> DependenceCoefficients:
    """Exact lag coefficients ``Lambda(s) = lambda_{i,i+s}`` and their tails, ``s = 0..max_lag``."""
    if int(max_lag) < 0:
        raise UsageError("max_lag must be >= 0")
    lag = np.array([np.abs(lag_cross_cov(model, reg, s)).sum() for s in range(int(max_lag) + 1)])
    # beyond the MA order every cross covariance vanishes
    lag[model.q + 1:] = 0.0
    return DependenceCoefficients(lag, lambda_tail(lag))


def conditional_response_law(model: LinearProcessModel, reg: RegressionModel, X) -> tuple[np.ndarray, float]:
    """Gaussian law of ``Y_1`` given ``X_1``: per-row means and the common standard deviation."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mean = reg.r_true(X)
    var = reg.noise_sd**2
    theta = reg.shared_theta
    if theta != 0.0:
        # eps_i | X_i = x  ~  N(a_0^T S^{-1} x, I - a_0^T S^{-1} a_0)
        a0 = model.weights[0]
        S = model.marginal_cov
        gain = np.linalg.solve(S, a0)[:, 0]  # column 0 of S^{-1} a_0
        mean = mean + theta * (X @ gain)
        var += theta**2 * (1.0 - float(a0[:, 0] @ gain))
    return mean, float(np.sqrt(max(var, 0.0)))
