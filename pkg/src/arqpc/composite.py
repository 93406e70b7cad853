"""Composition functions h and samplers for their structural assumptions.

Bundled kinds are Lipschitz, subadditive and zero at zero; a custom callback
may violate those properties, which `check_as3` will report but never fix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError

__all__ = ["HFunction", "AS3Report", "eval_h", "check_as3", "make_h"]

_KINDS = ("zero", "abs", "l1", "l2", "linf", "relu", "custom")


@dataclass(frozen=True)
class HFunction:
    """The outer composition function with its declared Lipschitz constant.

    `lipschitz` is trusted as declared (diagnostics validate, never override),
    and `is_convex` is metadata consumed by the optimality-radius policy; a
    wrong declaration only degrades that policy to its conservative branch.
    Custom callbacks must be pure and reentrant: instances are shared freely
    across concurrent runs.
    """

    kind: str
    lipschitz: float
    is_convex: bool
    m: int | None = None  # required input arity; None = any
    fn: Callable[[np.ndarray], float] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgumentError(f"unknown h kind {self.kind!r}")
        if self.lipschitz < 0:
            raise InvalidArgumentError("Lipschitz constant must be >= 0")
        if self.kind == "custom" and self.fn is None:
            raise InvalidArgumentError("custom h needs a callback")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"

    def __call__(self, v) -> float:
        return eval_h(self, v)

    def batch(self, V: np.ndarray) -> np.ndarray:
        """Vectorized evaluation over rows of V (shape (M, m))."""
        V = np.asarray(V, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        self._check_arity(V.shape[1])
        k = self.kind
        if k == "zero":
            return np.zeros(V.shape[0])
        if k == "abs":
            return np.abs(V[:, 0])
        if k == "l1":
            return np.sum(np.abs(V), axis=1)
        if k == "l2":
            return np.sqrt(np.sum(V * V, axis=1))
        if k == "linf":
            return np.max(np.abs(V), axis=1)
        if k == "relu":
            return np.maximum(V[:, 0], 0.0)
        return np.array([float(self.fn(row)) for row in V])

    def _check_arity(self, m_in: int):
        if self.kind in ("abs", "relu") and m_in != 1:
            raise DimensionMismatchError(f"h kind {self.kind!r} takes a single component")
        if self.m is not None and m_in != self.m:
            raise DimensionMismatchError(f"h expects m={self.m}, got {m_in}")


def make_h(kind: str, lipschitz: float | None = None, is_convex: bool | None = None,
           m: int | None = None, fn: Callable | None = None) -> HFunction:
    """Build a bundled h by config name, or a custom one from a callback."""
    defaults = {
        "zero": (0.0, True),
        "abs": (1.0, True),
        "l1": (1.0, True),
        "l2": (1.0, True),
        "linf": (1.0, True),
        "relu": (1.0, True),
    }
    if kind == "custom":
        if lipschitz is None or is_convex is None:
            raise InvalidArgumentError("custom h needs lipschitz and is_convex declared")
        return HFunction("custom", lipschitz, is_convex, m=m, fn=fn)
    if kind not in defaults:
        raise InvalidArgumentError(f"unknown h kind {kind!r}")
    lip, cvx = defaults[kind]
    if kind == "l1" and m is not None:
        lip = float(np.sqrt(m))  # 1-norm against the Euclidean metric
    return HFunction(
        kind,
        lip if lipschitz is None else lipschitz,
        cvx if is_convex is None else is_convex,
        m=1 if kind in ("abs", "relu") else m,
    )


def eval_h(h: HFunction, v) -> float:
    """h applied to a vector (the zero kind accepts anything and returns 0)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    h._check_arity(v.size)
    k = h.kind
    if k == "zero":
        return 0.0
    if k == "abs":
        return abs(float(v[0]))
    if k == "l1":
        return float(np.sum(np.abs(v)))
    if k == "l2":
        return float(np.linalg.norm(v))
    if k == "linf":
        return float(np.max(np.abs(v)))
    if k == "relu":
        return max(float(v[0]), 0.0)
    return float(h.fn(v))


@dataclass(frozen=True)
class AS3Report:
    """Sampled violations of subadditivity / Lipschitz continuity, plus h(0)."""

    max_subadditivity_violation: float
    max_lipschitz_violation: float
    h_at_zero: float


def check_as3(h: HFunction, sample_count: int, radius: float, seed: int, m: int = 1) -> AS3Report:
    """Sample pairs in the radius ball and report the worst violations.

    Pure diagnostic: reports max of h(x+y) - h(x) - h(y) and of
    |h(x) - h(y)| - L * ||x - y|| over the sample, and h(0).
    """
    if sample_count < 1 or radius <= 0:
        raise InvalidArgumentError("need sample_count >= 1 and radius > 0")
    if h.m is not None:
        m = h.m
    rng = np.random.default_rng(seed)
    # uniform in the ball: direction * radius * U^(1/m)
    def draw(count):
        z = rng.standard_normal((count, m))
        z /= np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
        r = radius * rng.random((count, 1)) ** (1.0 / m)
        return z * r

    X, Y = draw(sample_count), draw(sample_count)
    hx = h.batch(X)
    hy = h.batch(Y)
    hxy = h.batch(X + Y)
    sub = float(np.max(hxy - hx - hy))
    lip = float(np.max(np.abs(hx - hy) - h.lipschitz * np.linalg.norm(X - Y, axis=1)))
    return AS3Report(sub, lip, eval_h(h, np.zeros(m)))
