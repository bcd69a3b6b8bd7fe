"""
Dependence coefficients and an empirical check of the quasi-association
covariance inequality.

For stationary sequences the pairwise coefficient ``lambda_{i,j}`` only
depends on the lag ``|i - j|``; we store it as ``Lambda(s)``. The tail
``lambda_k`` is taken per index, ``2 * sum_{t >= k} Lambda(t)``, which is
the quantity that stays finite as the sample grows.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class DependenceCoefficients:
    lag_lambda: np.ndarray
    lambda_k: np.ndarray

    def __post_init__(self):
        lag = np.asarray(self.lag_lambda, dtype=float).reshape(-1)
        tail = np.asarray(self.lambda_k, dtype=float).reshape(-1)
        if np.any(lag < 0) or np.any(tail < 0):
            raise UsageError("dependence coefficients must be nonnegative")
        object.__setattr__(self, "lag_lambda", lag)
        object.__setattr__(self, "lambda_k", tail)

    def pair(self, i: int, j: int) -> float:
        """``lambda_{i,j}``; zero beyond the stored lags."""
        s = abs(int(i) - int(j))
        return float(self.lag_lambda[s]) if s < self.lag_lambda.size else 0.0

    def to_dict(self) -> dict:
        return {"lag_lambda": self.lag_lambda.tolist(), "lambda_k": self.lambda_k.tolist()}


def lambda_tail(lag_lambda: Sequence[float], n_horizon: int | None = None) -> np.ndarray:
    """Per-index dependence tail ``lambda_k`` for ``k = 0..len(lag_lambda) - 1``.

    ``lambda_k = 2 * sum_{k <= t < n_horizon} Lambda(t)`` for ``k >= 1``. At
    ``k = 0`` the diagonal term is counted once: ``Lambda(0) + lambda_1``.
    Lags at or beyond ``n_horizon`` cannot occur in a sample of that length
    and are dropped.
    """
    lag = np.asarray(lag_lambda, dtype=float).reshape(-1)
    if lag.size == 0:
        raise UsageError("lag_lambda must be nonempty")
    if not np.all(np.isfinite(lag)):
        raise UsageError("lag_lambda must be finite")
    if np.any(lag < 0):
        raise UsageError("lag_lambda must be nonnegative")
    if n_horizon is not None:
        if int(n_horizon) < 1:
            raise UsageError("n_horizon must be >= 1")
        lag = np.where(np.arange(lag.size) < int(n_horizon), lag, 0.0)
    # reverse cumulative sum; the running maximum makes the sup over s >= k explicit
    tail = 2.0 * np.cumsum(lag[::-1])[::-1]
    tail[0] = lag[0] + (tail[1] if lag.size > 1 else 0.0)
    return np.maximum.accumulate(tail[::-1])[::-1]


@dataclass(frozen=True)
class LipschitzProbe:
    """``f(z_1..z_m) = clip(sum_s <w_s, z_s> + c, -1, 1)`` on ``m`` blocks of size ``dim``.

    The Lipschitz constant is taken with respect to the product norm
    ``sum_s ||z_s||``, for which it equals ``max_s ||w_s||``.
    """

    weights: np.ndarray
    offset: float

    @classmethod
    def random(cls, m: int, dim: int, rng: np.random.Generator) -> "LipschitzProbe":
        w = rng.standard_normal((m, dim)) / np.sqrt(m * dim)
        return cls(w, float(rng.uniform(-0.5, 0.5)))

    @property
    def lip(self) -> float:
        return float(np.max(np.linalg.norm(self.weights, axis=1)))

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        """``Z`` has shape ``(..., m, dim)``."""
        lin = np.einsum("...sk,sk->...", Z, self.weights) + self.offset
        return np.clip(lin, -1.0, 1.0)


@dataclass
class ProbeResult:
    lip_f: float
    lip_g: float
    bound: float
    cov_hat: float
    se: float
    margin: float


@dataclass
class CheckReport:
    probes: int
    violations: int
    worst_margin: float
    per_probe: list[ProbeResult] = field(repr=False)
    index_I: list[int] = field(default_factory=list)
    index_J: list[int] = field(default_factory=list)
    mc_samples: int = 0
    seed: int | None = None

    @property
    def violation_rate(self) -> float:
        return self.violations / self.probes

    def to_dict(self) -> dict:
        return {
            "probes": self.probes,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "I": self.index_I,
            "J": self.index_J,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "per_probe": [asdict(p) for p in self.per_probe],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _index_set(name: str, idx: Iterable[int]) -> list[int]:
    out = sorted({int(i) for i in idx})
    if not out:
        raise UsageError(f"index set {name} must be nonempty")
    if out[0] < 1:
        raise UsageError(f"index set {name} must contain positive (1-based) indices")
    return out


def qa_inequality_check(
    model,
    reg,
    I: Iterable[int],
    J: Iterable[int],
    probes: int = 100,
    mc_samples: int = 10_000,
    seed: int = 0,
) -> CheckReport:
    """Monte Carlo check of ``|Cov(f(Z_I), g(Z_J))| <= Lip(f) Lip(g) sum_{i in I, j in J} lambda_ij``.

    ``Z_i = (X_i, Y_i)`` for the Gaussian moving-average ``model`` and
    regression ``reg``. Each of the ``probes`` random probe pairs is scored
    by ``margin = bound + 3 * se - |cov_hat|``; a negative margin counts as a
    violation. Indices are 1-based time points of a single path.
    """
    from .process_sim import simulate_paths, theoretical_lambda

    I_, J_ = _index_set("I", I), _index_set("J", J)
    if set(I_) & set(J_):
        raise UsageError("index sets I and J must be disjoint")
    if int(probes) < 1 or int(mc_samples) < 2:
        raise UsageError("need probes >= 1 and mc_samples >= 2")
    probes, mc_samples = int(probes), int(mc_samples)

    length = max(I_ + J_)
    lam = theoretical_lambda(model, reg, max_lag=length)
    lam_sum = sum(lam.pair(i, j) for i in I_ for j in J_)

    root = np.random.SeedSequence(seed)
    path_seq, probe_root = root.spawn(2)
    paths = simulate_paths(model, reg, length, mc_samples, np.random.default_rng(path_seq))
    ZI = paths[:, [i - 1 for i in I_], :]
    ZJ = paths[:, [j - 1 for j in J_], :]
    dim = paths.shape[-1]

    results = []
    for child in probe_root.spawn(probes):
        rng = np.random.default_rng(child)
        f = LipschitzProbe.random(len(I_), dim, rng)
        g = LipschitzProbe.random(len(J_), dim, rng)
        fv, gv = f(ZI), g(ZJ)
        prod = (fv - fv.mean()) * (gv - gv.mean())
        cov_hat = float(prod.mean())
        se = float(prod.std(ddof=1) / np.sqrt(mc_samples))
        bound = f.lip * g.lip * lam_sum
        results.append(ProbeResult(f.lip, g.lip, bound, cov_hat, se, bound + 3.0 * se - abs(cov_hat)))

    margins = np.array([r.margin for r in results])
    return CheckReport(
        probes=probes,
        violations=int(np.sum(margins < 0)),
        worst_margin=float(margins.min()),
        per_probe=results,
        index_I=I_,
        index_J=J_,
        mc_samples=mc_samples,
        seed=int(seed) if isinstance(seed, (int, np.integer)) else None,
    )
