"""
Points of a separable Hilbert space in a fixed, truncated orthonormal basis.

A point is stored by its first ``d`` basis coefficients, so the space is
identified with R^d and all geometry is Euclidean. The response space
pairs a Hilbert point with a scalar.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence, Union

import numpy as np

from .errors import DimensionMismatch, UsageError

ArrayLike = Union[np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class HilbertVector:
    """Coefficients ``<x, e_1>, ..., <x, e_d>`` of a point in the Hilbert space."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size < 1:
            raise UsageError("a HilbertVector needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise UsageError("HilbertVector coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def dim(self) -> int:
        return self.coeffs.size

    def __len__(self) -> int:
        return self.coeffs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coeffs, dtype=dtype)

    def __sub__(self, other: "HilbertVector") -> "HilbertVector":
        _check_dims(self, other)
        return HilbertVector(self.coeffs - as_coeffs(other))

    def __add__(self, other: "HilbertVector") -> "HilbertVector":
        _check_dims(self, other)
        return HilbertVector(self.coeffs + as_coeffs(other))

    def __eq__(self, other) -> bool:
        if not isinstance(other, HilbertVector):
            return NotImplemented
        return self.dim == other.dim and bool(np.array_equal(self.coeffs, other.coeffs))

    def __hash__(self) -> int:
        return hash(self.coeffs.tobytes())

    def tolist(self) -> list[float]:
        return self.coeffs.tolist()


def as_coeffs(v: Union[HilbertVector, ArrayLike]) -> np.ndarray:
    if isinstance(v, HilbertVector):
        return v.coeffs
    return HilbertVector(v).coeffs


def _check_dims(a, b) -> None:
    da, db = len(a), len(b)
    if da != db:
        raise DimensionMismatch(f"dimension mismatch: {da} vs {db}")


def inner_product(a: Union[HilbertVector, ArrayLike], b: Union[HilbertVector, ArrayLike]) -> float:
    """Return ``sum_k a_k b_k``."""
    ca, cb = as_coeffs(a), as_coeffs(b)
    _check_dims(ca, cb)
    return float(np.dot(ca, cb))


def norm(a: Union[HilbertVector, ArrayLike]) -> float:
    return float(np.sqrt(inner_product(a, a)))


def distance(a: Union[HilbertVector, ArrayLike], b: Union[HilbertVector, ArrayLike]) -> float:
    """Return ``||a - b||``."""
    ca, cb = as_coeffs(a), as_coeffs(b)
    _check_dims(ca, cb)
    diff = ca - cb
    return float(np.sqrt(np.dot(diff, diff)))


def distances(X: np.ndarray, x: Union[HilbertVector, ArrayLike]) -> np.ndarray:
    """Distances from every row of ``X`` (shape ``(n, d)``) to ``x``."""
    cx = as_coeffs(x)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != cx.size:
        raise DimensionMismatch(f"sample has dimension {X.shape[-1]}, query has {cx.size}")
    diff = X - cx
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


@dataclass(frozen=True)
class FunctionalSample:
    """Ordered stationary sample of pairs ``(X_i, Y_i)``.

    ``X`` holds one row of basis coefficients per observation and ``y`` the
    scalar responses. Row order is time order.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise UsageError("X must be a 2-d array with at least one column")
        if X.shape[0] < 1:
            raise UsageError("a FunctionalSample needs at least one record")
        if X.shape[0] != y.size:
            raise UsageError(f"{X.shape[0]} covariates but {y.size} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise UsageError("sample values must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_records(cls, records: Sequence[tuple]) -> "FunctionalSample":
        if not records:
            raise UsageError("a FunctionalSample needs at least one record")
        xs = [as_coeffs(x) for x, _ in records]
        d = xs[0].size
        for x in xs:
            _check_dims(x, xs[0])
        return cls(np.vstack(xs).reshape(-1, d), [float(y) for _, y in records])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def records(self) -> Iterator[tuple[HilbertVector, float]]:
        for row, yi in zip(self.X, self.y):
            yield HilbertVector(row), float(yi)

    def take(self, index) -> "FunctionalSample":
        return FunctionalSample(self.X[index], self.y[index])

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write the ``y,x1,...,xd`` CSV; floats use round-trip precision."""
        header = ["y"] + [f"x{k + 1}" for k in range(self.d)]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for yi, row in zip(self.y, self.X):
                w.writerow([repr(float(yi))] + [repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path: Union[str, Path]) -> "FunctionalSample":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise UsageError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        d = len(header) - 1
        expected = ["y"] + [f"x{k + 1}" for k in range(d)]
        if d < 1 or header != expected:
            raise UsageError(f"{path}: header must be y,x1,...,xd (got {','.join(header)})")
        body = [r for r in rows[1:] if r]
        if not body:
            raise UsageError(f"{path}: no data rows")
        try:
            data = np.array([[float(v) for v in r] for r in body], dtype=float)
        except ValueError as exc:
            raise UsageError(f"{path}: non-numeric value ({exc})") from None
        if data.shape[1] != d + 1:
            raise UsageError(f"{path}: ragged rows")
        return cls(data[:, 1:], data[:, 0])


@dataclass(frozen=True)
class TransformSpec:
    """A Lipschitz response transform applied before averaging.

    Use the constructors :meth:`identity`, :meth:`clip` and :meth:`custom`.
    """

    kind: str
    lip: float
    param: float = 0.0
    name: str = ""
    fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("identity", "clip", "custom"):
            raise UsageError(f"unknown transform kind {self.kind!r}")
        if not self.lip > 0:
            raise UsageError("transform Lipschitz constant must be positive")
        if self.kind == "clip" and not self.param > 0:
            raise UsageError("clip level must be positive")
        if self.kind == "custom" and self.fn is None:
            raise UsageError("custom transforms need an evaluator")

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls("identity", 1.0)

    @classmethod
    def clip(cls, c: float) -> "TransformSpec":
        return cls("clip", 1.0, param=float(c))

    @classmethod
    def custom(cls, name: str, lip: float, fn: Callable[[np.ndarray], np.ndarray]) -> "TransformSpec":
        return cls("custom", float(lip), name=name, fn=fn)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y.copy() if y.ndim else float(y)
        if self.kind == "clip":
            out = np.clip(y, -self.param, self.param)
        else:
            out = np.asarray(self.fn(y), dtype=float)
        return out if out.ndim else float(out)

    def describe(self) -> dict:
        if self.kind == "clip":
            return {"kind": "clip", "c": self.param}
        if self.kind == "custom":
            return {"kind": "custom", "name": self.name, "lip": self.lip}
        return {"kind": "identity"}
