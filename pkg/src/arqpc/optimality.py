"""Optimality measures: ball-constrained model decrease and termination tests.

The measure of order j at radius delta is the gap between the objective value
and the global minimum of its degree-j model (with the composition function
applied exactly to the truncated inner model) over the delta-ball intersected
with the feasible set.  The exact inner minimum is realized numerically by a
dense grid followed by a local polish, and every value is reported together
with a grid-resolution gap estimate; termination comparisons are slackened by
that gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .composite import HFunction
from .errors import EmptyDomainError, InvalidArgumentError
from .problems import FeasibleSet, Problem, taylor_at
from .tensors import TaylorPoly, VecTaylorPoly

__all__ = [
    "GridSpec",
    "BallMin",
    "PhiQuery",
    "PhiRecord",
    "Certificate",
    "CompositeObjective",
    "global_min_ball",
    "phi_w",
    "strong_check",
    "chi",
    "weak_check",
]

_DEFAULT_POINTS = {1: 2048, 2: 128, 3: 48}


@dataclass(frozen=True)
class GridSpec:
    """Budget for the inner global minimization (per-axis points and polish)."""

    points_per_axis: int | None = None  # None: 2048 / 128 / 48 for n = 1 / 2 / 3
    polish_iters: int = 200
    scale: float = 1.0  # multiplier on points_per_axis (re-verification doubles it)

    def points(self, n: int) -> int:
        base = self.points_per_axis if self.points_per_axis else _DEFAULT_POINTS.get(n, 32)
        g = int(round(base * self.scale))
        return max(g, 8)

    def doubled(self) -> "GridSpec":
        return GridSpec(self.points_per_axis, self.polish_iters, self.scale * 2.0)


@dataclass(frozen=True)
class BallMin:
    """Result of the inner minimization: argmin, value, and resolution gap."""

    d: np.ndarray
    value: float
    gap: float


@dataclass(frozen=True)
class PhiQuery:
    order: int
    radius: float
    tolerance: float = 0.0

    def __post_init__(self):
        if self.order < 1:
            raise InvalidArgumentError("order must be >= 1")
        if not (0.0 < self.radius <= 1.0):
            raise InvalidArgumentError("radius must lie in (0, 1]")


@dataclass(frozen=True)
class PhiRecord:
    """One order of a certificate: measured value against its threshold."""

    order: int
    radius: float
    phi: float
    threshold: float
    gap: float
    passed: bool


@dataclass(frozen=True)
class Certificate:
    """Per-order termination evidence at a point.

    An order passes when phi <= threshold + gap (the slack makes the numeric
    realization of the exact inner minimum usable for control flow; the gap is
    stored so acceptance checks can tighten).
    """

    x: np.ndarray
    records: tuple[PhiRecord, ...]
    source: str = "step1"  # step1 | step2-termination | replay

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)


class CompositeObjective:
    """d -> smooth(d) + h(inner(d)), with batch evaluation for grid scans."""

    def __init__(self, smooth: TaylorPoly, inner: VecTaylorPoly | None, h: HFunction | None):
        self.smooth = smooth
        self.inner = inner if (h is not None and not h.is_zero) else None
        self.h = h if (h is not None and not h.is_zero) else None
        self.n = smooth.dim

    def __call__(self, d) -> float:
        val = self.smooth.eval(d)
        if self.inner is not None:
            val += self.h(self.inner.eval(d))
        return val

    def batch(self, D: np.ndarray) -> np.ndarray:
        vals = self.smooth.eval_batch(D)
        if self.inner is not None:
            vals = vals + self.h.batch(self.inner.eval_batch(D))
        return vals


def _golden(fun, lo: float, hi: float, iters: int) -> tuple[float, float]:
    """Golden-section minimization on [lo, hi]; returns (argmin, value)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
        if b - a < 1e-15 * (1.0 + abs(a) + abs(b)):
            break
    xs = [(a, fun(a)), (c, fc), (d, fd), (b, fun(b))]
    return min(xs, key=lambda t: t[1])


def _coordinate_interval(center: np.ndarray, d: np.ndarray, axis: int, delta: float,
                         feasible: FeasibleSet) -> tuple[float, float]:
    """Feasible range of d[axis] keeping ||d|| <= delta and center + d in F."""
    rest = float(np.sum(d**2) - d[axis] ** 2)
    room = delta * delta - rest
    if room < 0:
        return (d[axis], d[axis])
    r = math.sqrt(room)
    lo, hi = -r, r
    e = np.zeros_like(d)
    e[axis] = 1.0
    base = center + d - d[axis] * e
    flo, fhi = feasible.segment_interval(base, e)
    return (max(lo, flo), min(hi, fhi))


def global_min_ball(objective, center, delta: float, feasible: FeasibleSet,
                    grid: GridSpec | None = None) -> BallMin:
    """Globally minimize over the delta-ball around `center` inside the feasible set.

    Dense per-axis grid over the box [-delta, delta]^n, masked to the ball and
    the feasible set, then a local polish (golden section for n = 1, projected
    coordinate descent otherwise).  The returned gap is the grid-resolution
    bound C * delta / G with C a sampled local Lipschitz estimate of the
    objective over the grid, floored at round-off scale.

    d = 0 is always tried first, so the admissible region is never empty for a
    feasible center.
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    n = center.size
    if delta <= 0:
        raise InvalidArgumentError("delta must be positive")
    grid = grid or GridSpec()
    G = grid.points(n)

    if not feasible.member(center):
        raise EmptyDomainError("center of the trust ball is infeasible")

    batch = getattr(objective, "batch", None)
    scalar = objective if callable(objective) else objective.__call__

    axes = [np.linspace(-delta, delta, G) for _ in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    D = np.stack([m_.reshape(-1) for m_ in mesh], axis=1)
    vals = batch(D) if batch is not None else np.array([scalar(row) for row in D])

    # local Lipschitz estimate from adjacent grid values along each axis
    h_step = 2.0 * delta / (G - 1)
    shape = (G,) * n
    V = vals.reshape(shape)
    C = 0.0
    for ax in range(n):
        diffs = np.abs(np.diff(V, axis=ax))
        if diffs.size:
            C = max(C, float(np.max(diffs)) / h_step)

    inside = np.sum(D * D, axis=1) <= delta * delta * (1 + 1e-12)
    ok = inside & feasible.member_batch(center + D)
    zero = np.zeros(n)
    f0 = float(scalar(zero))
    best_d, best_v = zero, f0
    if np.any(ok):
        vals_ok = np.where(ok, vals, np.inf)
        k = int(np.argmin(vals_ok))
        if vals_ok[k] < best_v:
            best_d, best_v = D[k].copy(), float(vals_ok[k])

    # polish
    if n == 1:
        lo = max(-delta, best_d[0] - h_step)
        hi = min(delta, best_d[0] + h_step)
        flo, fhi = feasible.segment_interval(center, np.array([1.0]))
        lo, hi = max(lo, flo), min(hi, fhi)
        if hi > lo:
            fun = lambda t: float(scalar(np.array([t])))
            t_star, v_star = _golden(fun, lo, hi, 80)
            if v_star < best_v:
                best_d, best_v = np.array([t_star]), v_star
    else:
        d = best_d.copy()
        cur = best_v
        for _ in range(grid.polish_iters):
            improved = False
            for ax in range(n):
                lo, hi = _coordinate_interval(center, d, ax, delta, feasible)
                if hi <= lo:
                    continue
                ts = np.linspace(lo, hi, 33)
                cand = np.repeat(d[None, :], ts.size, axis=0)
                cand[:, ax] = ts
                cv = batch(cand) if batch is not None else np.array([scalar(r) for r in cand])
                k = int(np.argmin(cv))
                # one refinement pass inside the winning cell
                span = (hi - lo) / 32.0
                ts2 = np.linspace(max(lo, ts[k] - span), min(hi, ts[k] + span), 33)
                cand2 = np.repeat(d[None, :], ts2.size, axis=0)
                cand2[:, ax] = ts2
                cv2 = batch(cand2) if batch is not None else np.array([scalar(r) for r in cand2])
                k2 = int(np.argmin(cv2))
                if cv2[k2] < cur - 1e-18 * (1 + abs(cur)):
                    d[ax] = ts2[k2]
                    cur = float(cv2[k2])
                    improved = True
            if not improved:
                break
        if cur < best_v:
            best_d, best_v = d, cur

    gap = C * (delta / G) + 1e-14 * (1.0 + abs(best_v))
    return BallMin(best_d, best_v, gap)


def phi_w(prob: Problem, x, j: int, delta: float, grid: GridSpec | None = None
          ) -> tuple[float, float]:
    """Order-j optimality measure at radius delta, with its oracle gap.

    Builds the degree-j truncations from the cached degree-p tensors (no new
    derivative evaluations), minimizes the truncated composite model over the
    ball, and returns w(x) minus that minimum, clamped at zero when within the
    gap of zero.
    """
    if not (1 <= j <= prob.p):
        raise InvalidArgumentError("order must lie in 1..p")
    if not (0.0 < delta <= 1.0):
        raise InvalidArgumentError("delta must lie in (0, 1]")
    x = np.asarray(x, dtype=float).reshape(-1)
    tf, tc = taylor_at(prob, x, prob.p)
    obj = CompositeObjective(tf.truncate(j), tc.truncate(j) if tc else None, prob.h)
    w_x = obj(np.zeros(prob.n))
    res = global_min_ball(obj, x, delta, prob.feasible, grid)
    val = w_x - res.value
    if abs(val) <= res.gap:
        val = 0.0
    return max(val, 0.0), res.gap


def strong_check(prob: Problem, x, eps, delta, grid: GridSpec | None = None,
                 source: str = "step1") -> Certificate:
    """Strong approximate-minimizer test: order j passes when
    phi_j <= eps_j * delta_j^j / j! (slackened by that order's oracle gap)."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if eps.size != delta.size:
        raise InvalidArgumentError("eps and delta must have matching length q")
    if np.any((eps <= 0) | (eps >= 1)):
        raise InvalidArgumentError("tolerances must lie in (0, 1)")
    if np.any((delta <= 0) | (delta > 1)):
        raise InvalidArgumentError("radii must lie in (0, 1]")
    recs = []
    for jj in range(1, eps.size + 1):
        val, gap = phi_w(prob, x, jj, float(delta[jj - 1]), grid)
        thr = float(eps[jj - 1]) * float(delta[jj - 1]) ** jj / math.factorial(jj)
        recs.append(PhiRecord(jj, float(delta[jj - 1]), val, thr, gap, val <= thr + gap))
    return Certificate(np.asarray(x, dtype=float).reshape(-1), tuple(recs), source)


def chi(q: int, delta: float) -> float:
    """sum_{l=1}^{q} delta^l / l!  (lies in [delta, 2*delta) for delta in (0,1])."""
    if q < 1 or delta <= 0:
        raise InvalidArgumentError("need q >= 1 and delta > 0")
    return sum(delta**ell / math.factorial(ell) for ell in range(1, q + 1))


def weak_check(prob: Problem, x, q: int, eps_q: float, delta_q: float,
               grid: GridSpec | None = None) -> bool:
    """Weak single-order test: phi_q <= eps_q * chi_q(delta_q), gap-slackened."""
    val, gap = phi_w(prob, x, q, delta_q, grid)
    return val <= eps_q * chi(q, delta_q) + gap
