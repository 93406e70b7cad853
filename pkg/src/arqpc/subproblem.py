"""Regularized model, its internal optimality measure, and the step search.

Each outer iteration builds m(s) = T_f(s) + h(T_c(s)) + sigma/(p+1)! ||s||^(p+1)
and asks this module for a pair (step, optimality radii) satisfying the descent
test and the per-order model-optimality tests, or for the verdict that the
model admits no improving step at all (which is itself a valid termination).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .composite import HFunction, eval_h
from .errors import BudgetExhaustedError, InvalidArgumentError, SingularPointError
from .optimality import BallMin, CompositeObjective, GridSpec, global_min_ball, _golden
from .problems import FeasibleSet
from .tensors import (
    SymTensor,
    TaylorPoly,
    VecTaylorPoly,
    reg_derivative_tensor,
    shift_derivative,
)

__all__ = [
    "RegModel",
    "StepResult",
    "model_eval",
    "model_phi",
    "compute_step",
    "large_step_shortcut",
    "good_cases",
]

MAX_RADIUS_HALVINGS = 40


@dataclass(frozen=True)
class RegModel:
    """Degree-p Taylor model of the composite objective plus power regularizer."""

    tf: TaylorPoly
    tc: VecTaylorPoly | None
    h: HFunction
    sigma: float
    p: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidArgumentError("regularization weight must be positive")
        if self.tf.degree != self.p:
            raise InvalidArgumentError("f model degree must equal p")
        if self.tc is not None and self.tc.degree != self.p:
            raise InvalidArgumentError("c model degree must equal p")

    @property
    def n(self) -> int:
        return self.tf.dim

    @property
    def reg_factor(self) -> float:
        return self.sigma / math.factorial(self.p + 1)

    def value_at_zero(self) -> float:
        """m(0), which equals the cached objective value at the base point."""
        val = float(self.tf.terms[0].entries[0])
        if self.tc is not None and not self.h.is_zero:
            val += eval_h(self.h, np.array([c.terms[0].entries[0] for c in self.tc.components]))
        return val

    def unregularized(self, s) -> float:
        """T_f(s) + h(T_c(s)): the model without its regularization term."""
        val = self.tf.eval(s)
        if self.tc is not None and not self.h.is_zero:
            val += eval_h(self.h, self.tc.eval(s))
        return val

    def __call__(self, s) -> float:
        return model_eval(self, s)

    def batch(self, S: np.ndarray) -> np.ndarray:
        S = np.asarray(S, dtype=float)
        if S.ndim == 1:
            S = S[:, None]
        vals = self.tf.eval_batch(S)
        if self.tc is not None and not self.h.is_zero:
            vals = vals + self.h.batch(self.tc.eval_batch(S))
        nrm = np.linalg.norm(S, axis=1)
        return vals + self.reg_factor * nrm ** (self.p + 1)


def model_eval(mdl: RegModel, s) -> float:
    """m(s) = T_f(s) + h(T_c(s)) + sigma/(p+1)! ||s||^(p+1)."""
    s = np.asarray(s, dtype=float).reshape(-1)
    return mdl.unregularized(s) + mdl.reg_factor * float(np.linalg.norm(s)) ** (mdl.p + 1)


def _shifted_local_model(mdl: RegModel, s: np.ndarray, j: int
                         ) -> tuple[TaylorPoly, VecTaylorPoly | None]:
    """Degree-j expansion of the model's smooth parts at s, plus shifted c models.

    The smooth part combines the exact derivative tensors of T_f at s with the
    regularizer's derivative tensors; the c part keeps h exact on the shifted
    degree-j truncation.  All pieces are coefficient recombinations.
    """
    nrm = float(np.linalg.norm(s))
    smooth_terms: list[SymTensor] = []
    for ell in range(j + 1):
        t = shift_derivative(mdl.tf, s, ell)
        if nrm == 0.0 and ell >= 2:
            # sigma > 0 always holds for a valid model
            raise SingularPointError(
                "model optimality of order >= 2 is undefined at the regularizer's origin"
            )
        smooth_terms.append(t + reg_derivative_tensor(s, mdl.p, ell).scale(mdl.reg_factor))
    pf = TaylorPoly(mdl.tf.base_point + s, tuple(smooth_terms))
    pc = None
    if mdl.tc is not None and not mdl.h.is_zero:
        comps = []
        for c in mdl.tc.components:
            terms = tuple(shift_derivative(c, s, ell) for ell in range(j + 1))
            comps.append(TaylorPoly(mdl.tf.base_point + s, terms))
        pc = VecTaylorPoly(tuple(comps))
    return pf, pc


def model_phi(mdl: RegModel, s, j: int, delta: float, feasible: FeasibleSet,
              grid: GridSpec | None = None) -> tuple[float, float]:
    """Order-j optimality measure of the model at the point s, radius delta.

    Evaluates the maximal decrease, over the delta-ball of feasible
    displacements d, of the degree-j expansion of the smooth model parts at s
    combined with h applied exactly to the shifted degree-j c-truncation;
    clamped at zero.  Returns (value, oracle gap).
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    if not (0.0 < delta <= 1.0):
        raise InvalidArgumentError("delta must lie in (0, 1]")
    if j < 1 or j > mdl.p:
        raise InvalidArgumentError("order must lie in 1..p")
    pf, pc = _shifted_local_model(mdl, s, j)
    obj = CompositeObjective(pf, pc, mdl.h)
    center = mdl.tf.base_point + s
    here = obj(np.zeros(mdl.n))
    res = global_min_ball(obj, center, delta, feasible, grid)
    val = here - res.value
    if abs(val) <= res.gap:
        val = 0.0
    return max(val, 0.0), res.gap


def good_cases(h: HFunction, feasible: FeasibleSet, q: int) -> bool:
    """The regime in which the unit optimality radius is always admissible:
    convex feasible set, and (no composition with q <= 2, or convex h with q = 1)."""
    if not feasible.is_convex:
        return False
    if h.is_zero:
        return q <= 2
    return h.is_convex and q == 1


def large_step_shortcut(s, eps, h: HFunction, feasible: FeasibleSet, q: int, p: int,
                        varpi: float, theta: float) -> bool:
    """Accept a descent step on length alone when ||s|| >= varpi * min_j eps_j^e.

    The exponent e is 1/(p-q+1) in the good cases, q/p for plain problems
    outside them, and (q+1)/(p+1) for composite ones outside them.
    """
    if not (theta < varpi <= 1.0):
        raise InvalidArgumentError("the shortcut factor must lie in (theta, 1]")
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if good_cases(h, feasible, q):
        e = 1.0 / (p - q + 1)
    elif h.is_zero:
        e = q / p
    else:
        e = (q + 1) / (p + 1)
    thresh = varpi * float(np.min(eps**e))
    return float(np.linalg.norm(np.asarray(s, dtype=float))) >= thresh


@dataclass(frozen=True)
class StepResult:
    """Outcome of the step search.

    status "found" carries a step with m(s) <= m(0) and per-order model
    optimality certificates at the returned radii; "step2-terminate" reports
    that no improving step exists (the model is already globally minimal at 0
    up to the termination guard).
    """

    status: str  # found | step2-terminate
    s: np.ndarray | None = None
    delta_s: np.ndarray | None = None
    model_value: float = math.nan
    model_value_at_zero: float = math.nan
    phis: tuple = ()  # per-order (j, delta, phi, threshold, gap)
    hook_used: bool = False
    shortcut_used: bool = False
    used_fallback: bool = False  # radii came from the scaled-tolerance branch
    halvings: tuple = ()  # per-order shrink count below the branch's start radius


def _newton_refine_1d(mdl: RegModel, t: float, v: float, lo: float, hi: float
                      ) -> tuple[float, float]:
    """Sharpen a univariate smooth-model minimizer past the value-comparison
    flatness floor using the model's exact derivatives.

    Golden-section localizes the argmin only to about sqrt(eps)*scale because
    nearby values tie; one Newton cleanup on m'(t) = 0 recovers full precision.
    Composite models keep the golden result (kinks break the derivative)."""
    if mdl.tc is not None and not mdl.h.is_zero:
        return t, v
    co = mdl.tf.univariate_coeffs()
    d1 = co[1:] * np.arange(1, co.size)
    d2 = d1[1:] * np.arange(1, d1.size)
    rf = mdl.reg_factor
    p = mdl.p
    best_t, best_v = t, v
    for _ in range(6):
        at = abs(t)
        g = _polyval(d1, t) + rf * (p + 1) * at**p * math.copysign(1.0, t)
        hgs = _polyval(d2, t) + rf * (p + 1) * p * at ** (p - 1)
        if not (hgs > 1e-300) or not math.isfinite(g):
            break
        t_new = min(max(t - g / hgs, lo), hi)
        if t_new == t:
            break
        t = t_new
    v_new = model_eval(mdl, np.array([t]))
    if v_new <= best_v + 1e-15 * (1 + abs(best_v)):
        return t, v_new
    return best_t, best_v


def _polyval(coeffs: np.ndarray, t: float) -> float:
    acc = 0.0
    for c in coeffs[::-1]:
        acc = acc * t + c
    return acc


def _minimize_model(mdl: RegModel, feasible: FeasibleSet, x_k: np.ndarray,
                    rng: np.random.Generator, n_starts: int = 32) -> BallMin:
    """Approximate global minimization of the model over feasible steps.

    Multi-start local descent: the origin, random unit-ball starts, plus dense
    grid seeding in one dimension.  The regularizer makes the model coercive,
    so the search window grows adaptively until the minimizer is interior.
    """
    n = mdl.n
    m0 = mdl.value_at_zero()

    if n == 1:
        lo, hi = feasible.segment_interval(x_k, np.array([1.0]))
        R = 2.0
        for _ in range(24):
            glo, ghi = max(lo, -R), min(hi, R)
            ts = np.linspace(glo, ghi, 4097)
            vals = mdl.batch(ts[:, None])
            k = int(np.argmin(vals))
            at_edge = (k <= 1 and glo > lo + 1e-300 and glo == -R) or (
                k >= ts.size - 2 and ghi < hi - 1e-300 and ghi == R
            )
            if not at_edge or R > 1e12:
                h_step = ts[1] - ts[0]
                blo = max(glo, ts[k] - h_step)
                bhi = min(ghi, ts[k] + h_step)
                t_star, v_star = _golden(lambda t: model_eval(mdl, np.array([t])), blo, bhi, 90)
                if vals[k] < v_star:
                    t_star, v_star = ts[k], float(vals[k])
                t_star, v_star = _newton_refine_1d(mdl, t_star, v_star, blo, bhi)
                if m0 <= v_star:
                    t_star, v_star = 0.0, m0
                return BallMin(np.array([t_star]), v_star, 0.0)
            R *= 4.0
        return BallMin(np.array([0.0]), m0, 0.0)

    starts = [np.zeros(n)]
    for _ in range(n_starts):
        z = rng.standard_normal(n)
        nz = np.linalg.norm(z)
        u = z / nz * rng.random() ** (1.0 / n) if nz > 0 else z
        cand = feasible.project(x_k + u) - x_k
        starts.append(cand)
    best_s, best_v = np.zeros(n), m0
    for s0 in starts:
        s = s0.copy()
        cur = model_eval(mdl, s)
        window = max(2.0, 2.0 * float(np.linalg.norm(s)))
        for _ in range(60):
            improved = False
            for ax in range(n):
                e = np.zeros(n)
                e[ax] = 1.0
                flo, fhi = feasible.segment_interval(x_k + s, e)
                glo, ghi = max(flo, -window), min(fhi, window)
                if ghi <= glo:
                    continue
                # two-stage vectorized line refinement along the coordinate
                ts = np.linspace(glo, ghi, 33)
                cand = np.repeat(s[None, :], ts.size, axis=0)
                cand[:, ax] += ts
                cv = mdl.batch(cand)
                k = int(np.argmin(cv))
                span = (ghi - glo) / 32.0
                ts2 = np.linspace(max(glo, ts[k] - span), min(ghi, ts[k] + span), 33)
                cand2 = np.repeat(s[None, :], ts2.size, axis=0)
                cand2[:, ax] += ts2
                cv2 = mdl.batch(cand2)
                k2 = int(np.argmin(cv2))
                t_star, v_star = float(ts2[k2]), float(cv2[k2])
                if cv[k] < v_star:
                    t_star, v_star = float(ts[k]), float(cv[k])
                if v_star < cur - 1e-18 * (1 + abs(cur)):
                    s = s + t_star * e
                    cur = v_star
                    improved = True
                    if abs(t_star) > 0.9 * window:
                        window *= 4.0
            if not improved:
                break
        if cur < best_v:
            best_s, best_v = s, cur
    return BallMin(best_s, best_v, 0.0)


def compute_step(mdl: RegModel, feasible: FeasibleSet, x_k: np.ndarray, eps,
                 theta: float, q: int, lw_hat: float, rng: np.random.Generator,
                 grid: GridSpec | None = None, scripted=None,
                 delta_policy: str = "auto", varpi: float | None = None) -> StepResult:
    """Produce (s, delta_s) passing the descent and model-optimality tests.

    The search (1) approximately globally minimizes the model over feasible
    steps, (2) reports step2-terminate when no improving step exists, then
    (3) selects the optimality radii: 1 in the good cases, otherwise
    theta*eps_j / (2 q! (6 lw_hat + 3 sigma)), halving any failing order up to
    40 times while re-verifying through `model_phi`.  A scripted (s, delta_s)
    pair bypasses the search and the verification (worst-case replays); a
    sufficiently long step may bypass verification via the length shortcut.
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    m0 = mdl.value_at_zero()

    if scripted is not None:
        s, delta_s = scripted
        s = np.asarray(s, dtype=float).reshape(-1)
        delta_s = np.asarray(delta_s, dtype=float).reshape(-1)
        return StepResult("found", s, delta_s, model_eval(mdl, s), m0, (), hook_used=True)

    res = _minimize_model(mdl, feasible, x_k, rng)
    termination_tol = 1e-12 * (1.0 + abs(m0))
    if res.value >= m0 - termination_tol:
        return StepResult("step2-terminate", model_value_at_zero=m0)
    s = res.d

    shortcut = False
    if varpi is not None and large_step_shortcut(s, eps, mdl.h, feasible, q, mdl.p, varpi, theta):
        shortcut = True

    good = good_cases(mdl.h, feasible, q)
    if delta_policy == "unit":
        good = True
    elif delta_policy == "scaled":
        good = False

    kappa_delta = theta / (2.0 * math.factorial(q) * (6.0 * lw_hat + 3.0 * mdl.sigma))
    ladder: list[tuple[np.ndarray, bool]] = []
    if good:
        ladder.append((np.ones(q), False))
    ladder.append((np.minimum(1.0, kappa_delta * eps), True))

    if shortcut:
        delta_s, fb = ladder[0]
        return StepResult("found", s, delta_s, res.value, m0, (),
                          shortcut_used=True, used_fallback=fb)

    last_exc: list = []
    for delta0, fb in ladder:
        delta_s = delta0.copy()
        phis = [None] * q
        halvings = [0] * q
        ok = True
        for jj in range(1, q + 1):
            passed = False
            for shrink in range(MAX_RADIUS_HALVINGS + 1):
                val, gap = model_phi(mdl, s, jj, float(delta_s[jj - 1]), feasible, grid)
                thr = theta * eps[jj - 1] * delta_s[jj - 1] ** jj / math.factorial(jj)
                phis[jj - 1] = (jj, float(delta_s[jj - 1]), val, thr, gap)
                if val <= thr + gap:
                    passed = True
                    halvings[jj - 1] = shrink
                    break
                delta_s[jj - 1] *= 0.5
            if not passed:
                ok = False
                break
        if ok:
            return StepResult("found", s, delta_s, res.value, m0, tuple(phis),
                              used_fallback=fb, halvings=tuple(halvings))
        last_exc = phis
    raise BudgetExhaustedError(
        f"no optimality radius certified after {MAX_RADIUS_HALVINGS} halvings; "
        f"last records: {last_exc}"
    )
