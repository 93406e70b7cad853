"""The adaptive regularization main loop (Steps 0 through 4) with trace recording.

Each iteration either terminates at the strong optimality test (Step 1),
terminates because the model admits no improving step (Step 2), or evaluates
the trial point, forms the achieved-over-predicted ratio, and updates the
regularization weight.  Unsuccessful iterations keep the iterate and its
cached derivatives and return directly to the step computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExhaustedError,
    DegenerateDenominatorError,
    InfeasiblePointError,
    InvalidArgumentError,
)
from .optimality import Certificate, GridSpec, strong_check
from .problems import Problem, eval_w, lw_constant, taylor_at
from .subproblem import RegModel, compute_step
from .tensors import frobenius_bound

__all__ = [
    "AlgoParams",
    "IterationRecord",
    "RunResult",
    "run",
    "rho",
    "sigma_update",
    "iteration_bound_check",
]


@dataclass(frozen=True)
class AlgoParams:
    """Tunable constants of the outer loop; validated against the usual chain
    0 < eta1 <= eta2 < 1,  0 < gamma1 < 1 < gamma2 < gamma3,  sigma_min in (0, sigma0]."""

    q: int
    eps: tuple
    theta: float = 0.5
    delta0: tuple | None = None
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    eta1: float = 0.05
    eta2: float = 0.9
    gamma1: float = 0.5
    gamma2: float = 2.0
    gamma3: float = 4.0
    max_iters: int = 10**6
    seed: int = 0
    shortcut_varpi: float | None = None
    delta_policy: str = "auto"  # auto | unit | scaled
    grid: GridSpec = field(default_factory=GridSpec)

    def __post_init__(self):
        eps = tuple(float(e) for e in np.atleast_1d(self.eps))
        object.__setattr__(self, "eps", eps)
        if self.q < 1 or len(eps) != self.q:
            raise InvalidArgumentError("eps must supply one tolerance per order 1..q")
        if any(not (0.0 < e < 1.0) for e in eps):
            raise InvalidArgumentError("tolerances must lie in (0, 1)")
        d0 = self.delta0
        if d0 is None:
            d0 = (1.0,) * self.q
        d0 = tuple(float(d) for d in np.atleast_1d(d0))
        object.__setattr__(self, "delta0", d0)
        if len(d0) != self.q or any(not (0.0 < d <= 1.0) for d in d0):
            raise InvalidArgumentError("delta0 must lie in (0, 1]^q")
        if not self.theta > 0:
            raise InvalidArgumentError("theta must be positive")
        if not (0.0 < self.eta1 <= self.eta2 < 1.0):
            raise InvalidArgumentError("need 0 < eta1 <= eta2 < 1")
        if not (0.0 < self.gamma1 < 1.0 < self.gamma2 < self.gamma3):
            raise InvalidArgumentError("need 0 < gamma1 < 1 < gamma2 < gamma3")
        if not (0.0 < self.sigma_min <= self.sigma0):
            raise InvalidArgumentError("need 0 < sigma_min <= sigma0")
        if self.shortcut_varpi is not None and not (self.theta < self.shortcut_varpi <= 1.0):
            raise InvalidArgumentError("shortcut factor must lie in (theta, 1]")
        if self.delta_policy not in ("auto", "unit", "scaled"):
            raise InvalidArgumentError("delta_policy must be auto, unit, or scaled")


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration as recorded in the trace (success iff rho >= eta1)."""

    k: int
    x: np.ndarray
    w: float
    sigma: float
    delta: tuple
    s: np.ndarray | None
    step_norm: float
    rho: float
    success: bool
    counters: tuple  # (w_evals, deriv_evals) snapshot after the iteration
    phi_records: tuple = ()  # Step-1 certificate records, when Step 1 ran
    model_phis: tuple = ()  # per-order model optimality values at the step
    hook_used: bool = False
    shortcut_used: bool = False
    taylor_dec: float = math.nan  # w(x_k) - T_w(x_k, s_k), the predicted decrease


@dataclass
class RunResult:
    """Full outcome of one solver run."""

    termination: str  # step1 | step2 | budget
    certificate: Certificate | None
    trace: list
    iterations: int
    n_success: int
    w_evals: int
    deriv_evals: int
    final_x: np.ndarray
    final_w: float
    replay_info: dict | None = None


def rho(w_k: float, w_trial: float, taylor_dec: float) -> float:
    """Achieved-over-predicted decrease, predicted by the unregularized model.

    The denominator w(x_k) - T_w(x_k, s_k) is positive for any accepted step
    (it dominates the regularizer term); an underflowed denominator is a
    degenerate iteration and raises.
    """
    if not (taylor_dec > 1e-300):
        raise DegenerateDenominatorError(f"predicted decrease {taylor_dec!r} underflowed")
    return (w_k - w_trial) / taylor_dec


def sigma_update(sigma_k: float, rho_k: float, params: AlgoParams) -> float:
    """Deterministic representatives of the update intervals: shrink to
    max(sigma_min, gamma1*sigma) on very successful steps, keep sigma in the
    middle branch, escalate by gamma2 on failure."""
    if rho_k >= params.eta2:
        return max(params.sigma_min, params.gamma1 * sigma_k)
    if rho_k >= params.eta1:
        return sigma_k
    return params.gamma2 * sigma_k


def iteration_bound_check(trace, sigma_max: float, params: AlgoParams) -> bool:
    """Success/failure accounting bound, checked on every prefix:
    k+1 <= |S_k| (1 + |log g1|/log g2) + log(sigma_max/sigma0)/log g2."""
    a = 1.0 + abs(math.log(params.gamma1)) / math.log(params.gamma2)
    b = math.log(max(sigma_max, params.sigma0) / params.sigma0) / math.log(params.gamma2)
    successes = 0
    for k, rec in enumerate(trace):
        if rec.success:
            successes += 1
        if k + 1 > successes * a + b + 1e-9:
            return False
    return True


def _lw_surrogate(tf, tc, h, current: float) -> float:
    """Running overestimate of the smoothness constant when none is declared.

    Uses cheap norm upper bounds of the fetched derivative tensors; an
    overestimate only shrinks the optimality radii, never their validity.
    """
    best = current
    for ell in range(1, tf.degree + 1):
        v = frobenius_bound(tf.terms[ell])
        if tc is not None and not h.is_zero:
            v += h.lipschitz * max(frobenius_bound(c.terms[ell]) for c in tc.components)
        best = max(best, v)
    return max(best, 1.0)


def _step2_certificate(prob: Problem, x, params: AlgoParams, delta_k) -> Certificate:
    """Certificate for a Step-2 termination: shrink the radii until the strong
    test passes (guaranteed for small enough radii when the model is globally
    minimal at the origin)."""
    delta = np.array(delta_k, dtype=float)
    for _ in range(60):
        cert = strong_check(prob, x, params.eps, delta, params.grid, source="step2-termination")
        if cert.passed:
            return cert
        shrink = np.array([0.5 if not r.passed else 1.0 for r in cert.records])
        delta = delta * shrink
        if np.any(delta < 1e-300):
            break
    raise BudgetExhaustedError("no radius certified the Step-2 termination")


def run(prob: Problem, params: AlgoParams, x0=None, step_hook=None) -> RunResult:
    """Drive the solver from x0 (default: the problem's start point).

    `step_hook(k, x, sigma) -> (s, delta_s) | None` lets scripted replays
    inject the designated step; hook use is recorded in the trace.
    """
    x = np.asarray(prob.x0 if x0 is None else x0, dtype=float).reshape(-1).copy()
    if not prob.feasible.member(x):
        raise InfeasiblePointError("initial point is infeasible")
    prob.counters.reset()
    prob._cache.pop("taylor", None)
    rng = np.random.default_rng(params.seed)

    w_k = eval_w(prob, x)
    sigma = params.sigma0
    delta = np.array(params.delta0, dtype=float)
    lw_declared = lw_constant(prob)
    lw_hat = lw_declared if lw_declared is not None else 1.0

    trace: list[IterationRecord] = []
    n_success = 0
    go_step1 = True
    k = 0
    while k < params.max_iters:
        cert = None
        if go_step1:
            cert = strong_check(prob, x, params.eps, delta, params.grid)
            if cert.passed:
                return RunResult(
                    "step1", cert, trace, k, n_success,
                    prob.counters.w_evals, prob.counters.deriv_evals, x, w_k,
                )
        tf, tc = taylor_at(prob, x, prob.p)
        if lw_declared is None:
            lw_hat = _lw_surrogate(tf, tc, prob.h, lw_hat)
        mdl = RegModel(tf, tc, prob.h, sigma, prob.p)

        scripted = step_hook(k, x, sigma) if step_hook is not None else None
        step = compute_step(
            mdl, prob.feasible, x, params.eps, params.theta, params.q, lw_hat,
            rng, params.grid, scripted=scripted, delta_policy=params.delta_policy,
            varpi=params.shortcut_varpi,
        )
        if step.status == "step2-terminate":
            cert2 = _step2_certificate(prob, x, params, delta)
            return RunResult(
                "step2", cert2, trace, k, n_success,
                prob.counters.w_evals, prob.counters.deriv_evals, x, w_k,
            )

        s = step.s
        w_trial = eval_w(prob, x + s)
        taylor_dec = w_k - mdl.unregularized(s)
        try:
            rho_k = rho(w_k, w_trial, taylor_dec)
        except DegenerateDenominatorError:
            rho_k = -math.inf  # treated as unsuccessful; sigma escalates
        success = rho_k >= params.eta1

        trace.append(
            IterationRecord(
                k, x.copy(), w_k, sigma, tuple(delta), s.copy(),
                float(np.linalg.norm(s)), rho_k, success,
                prob.counters.snapshot(),
                cert.records if cert is not None else (),
                step.phis, step.hook_used, step.shortcut_used,
                taylor_dec,
            )
        )
        sigma = sigma_update(sigma, rho_k, params)
        if success:
            x = x + s
            w_k = w_trial
            delta = np.array(step.delta_s, dtype=float)
            n_success += 1
            go_step1 = True
        else:
            go_step1 = False
        k += 1

    return RunResult(
        "budget", None, trace, k, n_success,
        prob.counters.w_evals, prob.counters.deriv_evals, x, w_k,
    )
