"""
Asymptotic constants, plug-in variances and rate conditions for the
kernel regression estimator.

The variance of ``sqrt(n phi(h)) (r_n(x) - r(x))`` tends to

    sigma_2^2(x) = (C_2 / C_1^2) (g_2(x) - r(x)^2) / f_1(x)

and the centred numerator has limit variance ``sigma_1^2`` with ``g_2``
in place of ``g_2 - r^2``. ``C_j`` comes from the kernel and the local
shape of the small-ball function ``phi``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DegenerateVariance, UsageError
from .estimator import EstimatorConfig, KernelSpec, estimate_details, kernel_weight, small_ball_empirical
from .hilbert_core import FunctionalSample, distances

DEFAULT_U_SEQUENCE = tuple(10.0 ** -k for k in range(1, 7))


@dataclass(frozen=True)
class SmallBallFunction:
    """A small-ball rate function ``phi`` with its derivative."""

    name: str
    phi: Callable[[float], float] = field(compare=False)
    dphi: Callable[[float], float] = field(compare=False)

    @classmethod
    def power(cls, b: float) -> "SmallBallFunction":
        if not b > 0:
            raise UsageError("power small-ball exponent must be positive")
        return cls(f"u^{b:g}", lambda u: u**b, lambda u: b * u ** (b - 1.0))

    @classmethod
    def linear_quadratic(cls) -> "SmallBallFunction":
        return cls("u(1+u)", lambda u: u * (1.0 + u), lambda u: 1.0 + 2.0 * u)


def cj_profile(kernel: KernelSpec, sb: SmallBallFunction, j: int, u_sequence: Sequence[float]) -> np.ndarray:
    """``I(u) = (u / phi(u)) * int_0^1 K(y)^j phi'(u y) dy`` at each ``u``."""
    if j not in (1, 2):
        raise UsageError("j must be 1 or 2")
    out = []
    for u in u_sequence:
        pu = sb.phi(u)
        if not (np.isfinite(pu) and pu > 0):
            raise UsageError(f"phi({u:g}) = {pu} is not positive")
        val, _ = integrate.quad(
            lambda y: kernel(y) ** j * sb.dphi(u * y), 0.0, 1.0, epsabs=1e-12, epsrel=1e-9, limit=200
        )
        out.append(u / pu * val)
    return np.array(out)


def compute_cj(
    kernel: KernelSpec,
    sb: SmallBallFunction,
    j: int,
    u_sequence: Sequence[float] = DEFAULT_U_SEQUENCE,
    tol: float = 1e-6,
) -> float:
    """Limit ``C_j`` of :func:`cj_profile` as ``u -> 0``.

    The last value of a decreasing ``u_sequence`` is returned once the last
    two values agree to ``tol``.
    """
    u = np.asarray(u_sequence, dtype=float)
    if u.size < 2 or np.any(u <= 0) or np.any(np.diff(u) >= 0):
        raise UsageError("u_sequence needs at least two positive, strictly decreasing values")
    prof = cj_profile(kernel, sb, j, u)
    gap = abs(prof[-1] - prof[-2])
    if not gap < tol:
        raise ConvergenceError(f"C_{j} not converged: |I(u_last) - I(u_prev)| = {gap:.3g} >= {tol:g}")
    return float(prof[-1])


@dataclass(frozen=True)
class RateParams:
    a: float
    b: float
    delta: float
    beta: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.beta > 0):
            raise UsageError("a, b and beta must be positive")
        if not 0 < self.delta < 1:
            raise UsageError("delta must lie in (0, 1)")

    @property
    def a_threshold(self) -> float:
        """``(2 + b) / (delta * b)``."""
        return (2.0 + self.b) / (self.delta * self.b)


@dataclass
class ConditionReport:
    params: dict
    n: list
    h: list
    phi_h: list
    decay_threshold: float
    decay_ok: bool
    log_term: list
    growth_term: list
    bias_term: list
    log_term_ok: bool | None
    growth_term_ok: bool | None
    bias_term_ok: bool | None

    @property
    def all_ok(self) -> bool:
        flags = [self.decay_ok, self.log_term_ok, self.growth_term_ok, self.bias_term_ok]
        return all(f is not False for f in flags)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["all_ok"] = self.all_ok
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _trend(values: Sequence[float], direction: int) -> bool | None:
    if len(values) < 2:
        return None
    d = np.diff(np.asarray(values, dtype=float))
    return bool(np.all(d < 0)) if direction < 0 else bool(np.all(d > 0))


def check_rate_conditions(params: RateParams, n, h, phi_h) -> ConditionReport:
    """Evaluate the rate conditions for one point or a schedule.

    Condition (i), ``a > (2 + b) / (delta b)``, is a plain comparison.
    The three sequence conditions are reported as finite-``n`` magnitudes

    * ``(log n)^2 phi_h^(a delta - (1 + 2/b))``   (should decrease to 0)
    * ``n phi_h^(1 + 2 delta)``                   (should increase)
    * ``n h^(2 beta) phi_h``                      (should decrease to 0)

    and judged by a strict monotone trend when a schedule of at least two
    points is given (``None`` otherwise).
    """
    ns = np.atleast_1d(np.asarray(n, dtype=float))
    hs = np.broadcast_to(np.atleast_1d(np.asarray(h, dtype=float)), ns.shape)
    ps = np.broadcast_to(np.atleast_1d(np.asarray(phi_h, dtype=float)), ns.shape)
    if np.any(ns < 2) or np.any(hs <= 0) or np.any(ps <= 0):
        raise UsageError("need n >= 2, h > 0 and phi_h > 0")
    if ns.size > 1 and np.any(np.diff(ns) <= 0):
        raise UsageError("the n schedule must be strictly increasing")
    a, b, dl, be = params.a, params.b, params.delta, params.beta
    # extreme exponents may overflow to inf; the trend check then fails honestly
    with np.errstate(over="ignore", invalid="ignore"):
        log_term = np.log(ns) ** 2 * ps ** (a * dl - (1.0 + 2.0 / b))
        growth = ns * ps ** (1.0 + 2.0 * dl)
        bias = ns * hs ** (2.0 * be) * ps
        trends = _trend(log_term, -1), _trend(growth, +1), _trend(bias, -1)
    return ConditionReport(
        params=asdict(params),
        n=ns.tolist(),
        h=hs.tolist(),
        phi_h=ps.tolist(),
        decay_threshold=params.a_threshold,
        decay_ok=bool(a > params.a_threshold),
        log_term=log_term.tolist(),
        growth_term=growth.tolist(),
        bias_term=bias.tolist(),
        log_term_ok=trends[0],
        growth_term_ok=trends[1],
        bias_term_ok=trends[2],
    )


@dataclass
class VarianceEstimate:
    c1: float
    c2: float
    g2_hat: float
    f1_hat: float
    r_hat: float
    sigma1_sq: float
    sigma2_sq: float
    degenerate: bool = False
    n: int = 0
    h: float = 0.0
    phi_h: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def assemble_variance(c1, c2, g2, f1, r, **echo) -> VarianceEstimate:
    """Apply the two variance formulas; a negative conditional variance is clamped and flagged."""
    if not (c1 > 0 and c2 > 0 and f1 > 0):
        raise UsageError("c1, c2 and f1 must be positive")
    k = c2 / c1**2
    cond = g2 - r * r
    # relative floor: a constant response gives g2 == r^2 only up to rounding
    degenerate = not cond > 1e-12 * max(abs(g2), r * r)
    if degenerate:
        cond = 0.0
    return VarianceEstimate(
        c1=c1, c2=c2, g2_hat=g2, f1_hat=f1, r_hat=r,
        sigma1_sq=k * g2 / f1,
        sigma2_sq=k * max(cond, 0.0) / f1,
        degenerate=degenerate,
        **echo,
    )


def sigma_plugin(
    sample: FunctionalSample,
    x,
    cfg: EstimatorConfig,
    c1: float,
    c2: float,
    phi_h: float,
    r_ref: float | None = None,
) -> VarianceEstimate:
    """Plug-in ``sigma_1^2(x)`` and ``sigma_2^2(x)``.

    ``g_2`` is estimated by kernel regression of ``phi(y)^2`` with the same
    weights as ``r_n``, and ``f_1`` by ``F_hat(h, x) / phi_h``.
    """
    if not phi_h > 0:
        raise UsageError("phi_h must be positive")
    est = estimate_details(sample, x, cfg)
    w = kernel_weight(cfg.kernel, distances(sample.X, x), cfg.h)
    py = np.asarray(cfg.transform(sample.y))
    g2 = float(np.dot(w, py * py) / w.sum())
    F_hat = float(small_ball_empirical(sample, x, [cfg.h]).F_hat[0])
    r = est.r_hat if r_ref is None else float(r_ref)
    return assemble_variance(c1, c2, g2, F_hat / phi_h, r, n=sample.n, h=cfg.h, phi_h=phi_h)


def standardize(r_hat: float, truth: float, n: int, phi_h: float, sigma2_sq: float) -> float:
    """``sqrt(n phi_h) (r_hat - truth) / sqrt(sigma2_sq)``."""
    if not phi_h > 0:
        raise UsageError("phi_h must be positive")
    if not sigma2_sq > 0:
        raise DegenerateVariance("sigma_2^2 is zero; the statistic is undefined")
    return math.sqrt(n * phi_h) * (r_hat - truth) / math.sqrt(sigma2_sq)


def standardized_statistic(
    sample: FunctionalSample,
    x,
    cfg: EstimatorConfig,
    truth: float,
    phi_h: float,
    variance: VarianceEstimate,
) -> float:
    if variance.degenerate:
        raise DegenerateVariance("variance estimate is flagged degenerate")
    r_hat = estimate_details(sample, x, cfg).r_hat
    return standardize(r_hat, truth, sample.n, phi_h, variance.sigma2_sq)
