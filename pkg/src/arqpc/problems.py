"""Problem definitions: derivative oracles, feasible sets, evaluation counters.

Oracles are closed-form callbacks returning the full stack of derivative
tensors up to the model degree.  A small formal-polynomial helper builds
exact oracles for the polynomial test problems in the registry; finite
differences are confined to the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .composite import HFunction, eval_h, make_h
from .errors import (
    DimensionMismatchError,
    InfeasiblePointError,
    InvalidArgumentError,
    OracleError,
    UnknownProblemError,
)
from .tensors import SymTensor, TaylorPoly, VecTaylorPoly, sorted_multi_indices

__all__ = [
    "FeasibleSet",
    "EvalCounters",
    "Problem",
    "eval_w",
    "taylor_at",
    "lw_constant",
    "sigma_max_bound",
    "polynomial_oracle",
    "vector_polynomial_oracle",
    "get_problem",
    "PROBLEM_NAMES",
]


@dataclass(frozen=True)
class FeasibleSet:
    """All of space, a coordinate box, or a Euclidean ball; all convex.

    Supports membership, (Euclidean) projection, and batch membership for
    grid filtering.  Projection is idempotent and always lands inside.
    """

    kind: str  # all_space | box | l2_ball
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("all_space", "box", "l2_ball"):
            raise InvalidArgumentError(f"unknown feasible set kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=float).reshape(-1)
            hi = np.asarray(self.upper, dtype=float).reshape(-1)
            if lo.size != hi.size or np.any(lo > hi):
                raise InvalidArgumentError("box needs lower <= upper, matching sizes")
            lo.setflags(write=False)
            hi.setflags(write=False)
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
        if self.kind == "l2_ball":
            c = np.asarray(self.center, dtype=float).reshape(-1)
            if self.radius <= 0:
                raise InvalidArgumentError("ball needs radius > 0")
            c.setflags(write=False)
            object.__setattr__(self, "center", c)

    @classmethod
    def all_space(cls) -> "FeasibleSet":
        return cls("all_space")

    @classmethod
    def box(cls, lower, upper) -> "FeasibleSet":
        return cls("box", lower=np.asarray(lower, float), upper=np.asarray(upper, float))

    @classmethod
    def l2_ball(cls, center, radius: float) -> "FeasibleSet":
        return cls("l2_ball", center=np.asarray(center, float), radius=float(radius))

    @property
    def is_convex(self) -> bool:
        return True  # every supported kind is convex

    def member(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.kind == "all_space":
            return True
        if self.kind == "box":
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        return bool(np.linalg.norm(x - self.center) <= self.radius + tol)

    def member_batch(self, X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.kind == "all_space":
            return np.ones(X.shape[0], dtype=bool)
        if self.kind == "box":
            return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=1)
        return np.linalg.norm(X - self.center, axis=1) <= self.radius + tol

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if self.kind == "all_space":
            return x.copy()
        if self.kind == "box":
            return np.clip(x, self.lower, self.upper)
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / nd)

    def segment_interval(self, base: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
        """The interval of t with base + t*direction feasible (convex slice).

        Returns (lo, hi); (-inf, inf) for all of space, possibly empty (lo > hi).
        """
        base = np.asarray(base, dtype=float).reshape(-1)
        e = np.asarray(direction, dtype=float).reshape(-1)
        if self.kind == "all_space":
            return (-np.inf, np.inf)
        if self.kind == "box":
            lo, hi = -np.inf, np.inf
            for i in range(base.size):
                if e[i] == 0.0:
                    if base[i] < self.lower[i] - 1e-12 or base[i] > self.upper[i] + 1e-12:
                        return (1.0, -1.0)
                    continue
                t1 = (self.lower[i] - base[i]) / e[i]
                t2 = (self.upper[i] - base[i]) / e[i]
                lo = max(lo, min(t1, t2))
                hi = min(hi, max(t1, t2))
            return (lo, hi)
        # ball: ||base - c + t e||^2 <= r^2
        d = base - self.center
        a = float(e @ e)
        if a == 0.0:
            return (-np.inf, np.inf) if np.linalg.norm(d) <= self.radius else (1.0, -1.0)
        b = 2.0 * float(d @ e)
        c = float(d @ d) - self.radius**2
        disc = b * b - 4 * a * c
        if disc < 0:
            return (1.0, -1.0)
        sq = math.sqrt(disc)
        return ((-b - sq) / (2 * a), (-b + sq) / (2 * a))


@dataclass
class EvalCounters:
    """Evaluation accounting: objective values and full derivative fetches."""

    w_evals: int = 0
    deriv_evals: int = 0

    def reset(self):
        self.w_evals = 0
        self.deriv_evals = 0

    def snapshot(self) -> tuple[int, int]:
        return (self.w_evals, self.deriv_evals)


@dataclass
class Problem:
    """Composite problem w(x) = f(x) + h(c(x)) over a feasible set.

    f_oracle(x) returns [f(x), grad, hess, ...] up to order p (dense arrays);
    c_oracle(x) returns, per order l, an array of shape (m,) + (n,)*l, or is
    None when h is zero.  Declared Lipschitz constants are per derivative
    order (index j bounds the j-th derivative's Lipschitz constant).
    """

    n: int
    m: int
    p: int
    f_oracle: Callable[[np.ndarray], list]
    c_oracle: Callable[[np.ndarray], list] | None
    h: HFunction
    feasible: FeasibleSet
    lipschitz_f: dict[int, float] | None = None
    lipschitz_c: dict[int, float] | None = None
    w_low: float | None = None
    x0: np.ndarray | None = None
    name: str = ""
    counters: EvalCounters = field(default_factory=EvalCounters)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise InvalidArgumentError("need p >= 1 and n >= 1")
        if not self.h.is_zero and self.c_oracle is None:
            raise InvalidArgumentError("composite problem needs a c oracle")
        for lips in (self.lipschitz_f, self.lipschitz_c):
            if lips:
                for j, L in lips.items():
                    if L < 1.0:
                        raise InvalidArgumentError(
                            f"declared Lipschitz constants are normalized to >= 1 (order {j})"
                        )
        if self.x0 is None:
            self.x0 = np.zeros(self.n)
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)


def _as_symtensors(raw: list, n: int, p: int) -> tuple[SymTensor, ...]:
    out = []
    for ell in range(p + 1):
        arr = np.asarray(raw[ell], dtype=float)
        if ell == 0:
            out.append(SymTensor(0, n, np.array([float(arr)])))
        elif arr.shape == (len(sorted_multi_indices(n, ell)),):
            out.append(SymTensor(ell, n, arr))  # already packed by sorted index
        else:
            out.append(SymTensor.from_dense(arr, n))
    return tuple(out)


def eval_w(prob: Problem, x) -> float:
    """Objective value f(x) + h(c(x)); counts one objective evaluation."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != prob.n:
        raise DimensionMismatchError("point dimension mismatch")
    if not prob.feasible.member(x):
        raise InfeasiblePointError(f"point {x} is outside the feasible set")
    prob.counters.w_evals += 1
    try:
        fx = float(np.asarray(prob.f_oracle(x)[0]))
        hv = 0.0
        if not prob.h.is_zero:
            cx = np.atleast_1d(np.asarray(prob.c_oracle(x)[0], dtype=float))
            hv = eval_h(prob.h, cx)
    except (InfeasiblePointError, DimensionMismatchError):
        raise
    except Exception as exc:  # oracle callbacks are user code
        raise OracleError(str(exc)) from exc
    return fx + hv


def taylor_at(prob: Problem, x, degree: int) -> tuple[TaylorPoly, VecTaylorPoly | None]:
    """Taylor models of f and c at x, truncated to `degree`.

    The full order-0..p stack is fetched once per distinct point and cached;
    truncations and repeat queries at the cached point cost no new oracle
    work and no additional derivative evaluations.  The two-phase fetch of
    orders 1..q then q+1..p inside the solver is therefore counted as a
    single derivative evaluation.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != prob.n:
        raise DimensionMismatchError("point dimension mismatch")
    if degree > prob.p:
        raise InvalidArgumentError(f"degree {degree} exceeds problem degree {prob.p}")
    if not prob.feasible.member(x):
        raise InfeasiblePointError(f"point {x} is outside the feasible set")
    key = x.tobytes()
    cached = prob._cache.get("taylor")
    if cached is None or cached[0] != key:
        try:
            raw_f = prob.f_oracle(x)
            tf = TaylorPoly(x, _as_symtensors(raw_f, prob.n, prob.p))
            tc = None
            if prob.c_oracle is not None:
                raw_c = prob.c_oracle(x)
                comps = []
                for i in range(prob.m):
                    comps.append(
                        TaylorPoly(
                            x,
                            _as_symtensors(
                                [np.asarray(raw_c[ell])[i] for ell in range(prob.p + 1)],
                                prob.n,
                                prob.p,
                            ),
                        )
                    )
                tc = VecTaylorPoly(tuple(comps))
        except Exception as exc:
            raise OracleError(str(exc)) from exc
        prob._cache["taylor"] = (key, tf, tc)
        if degree >= 1:
            prob.counters.deriv_evals += 1
        cached = prob._cache["taylor"]
    _, tf, tc = cached
    tf_out = tf.truncate(degree) if degree < prob.p else tf
    tc_out = None
    if tc is not None:
        tc_out = tc.truncate(degree) if degree < prob.p else tc
    return tf_out, tc_out


def cached_w(prob: Problem, x) -> float:
    """w(x) reconstructed from the cached tensors; no counters touched."""
    tf, tc = taylor_at(prob, x, prob.p)
    val = float(tf.terms[0].entries[0])
    if tc is not None and not prob.h.is_zero:
        val += eval_h(prob.h, tc.eval(np.zeros(prob.n)))
    return val


def lw_constant(prob: Problem) -> float | None:
    """max_j ( L_f[j-1] + L_h * L_c[j-1] ) over j = 1..p; None if any is missing."""
    if prob.lipschitz_f is None:
        return None
    lh = prob.h.lipschitz
    best = None
    for j in range(1, prob.p + 1):
        lf = prob.lipschitz_f.get(j - 1)
        if lf is None:
            return None
        term = lf
        if not prob.h.is_zero:
            if prob.lipschitz_c is None or prob.lipschitz_c.get(j - 1) is None:
                return None
            term = lf + lh * prob.lipschitz_c[j - 1]
        best = term if best is None else max(best, term)
    return best


def sigma_max_bound(prob: Problem, sigma0: float, gamma3: float, eta2: float) -> float | None:
    """max(sigma0, gamma3 * (L_f,p + L_h * L_c,p) / (1 - eta2)) when constants exist."""
    if prob.lipschitz_f is None or prob.lipschitz_f.get(prob.p) is None:
        return None
    lwp = prob.lipschitz_f[prob.p]
    if not prob.h.is_zero:
        if prob.lipschitz_c is None or prob.lipschitz_c.get(prob.p) is None:
            return None
        lwp = lwp + prob.h.lipschitz * prob.lipschitz_c[prob.p]
    return max(sigma0, gamma3 * lwp / (1.0 - eta2))


# -- formal polynomials: exact oracles for the registry -----------------------


def _poly_diff(poly: dict, var: int) -> dict:
    out: dict = {}
    for expo, c in poly.items():
        e = expo[var]
        if e == 0:
            continue
        new = list(expo)
        new[var] = e - 1
        key = tuple(new)
        out[key] = out.get(key, 0.0) + c * e
    return out


def _poly_eval(poly: dict, x: np.ndarray) -> float:
    acc = 0.0
    for expo, c in poly.items():
        term = c
        for i, e in enumerate(expo):
            if e:
                term *= x[i] ** e
        acc += term
    return acc


def polynomial_oracle(poly: dict, n: int, p: int) -> Callable[[np.ndarray], list]:
    """Exact derivative oracle for a formal polynomial {exponent tuple: coeff}.

    Returns a callback producing [value, grad, ..., order-p tensor] with the
    order-l tensor packed by sorted multi-index.
    """
    # precompute all distinct partial derivatives up to order p
    derivs: dict[tuple[int, ...], dict] = {(): dict(poly)}

    def get_deriv(idx: tuple[int, ...]) -> dict:
        if idx in derivs:
            return derivs[idx]
        d = _poly_diff(get_deriv(idx[:-1]), idx[-1])
        derivs[idx] = d
        return d

    index_sets = [sorted_multi_indices(n, ell) for ell in range(p + 1)]
    for ell in range(p + 1):
        for idx in index_sets[ell]:
            get_deriv(idx)

    def oracle(x: np.ndarray) -> list:
        x = np.asarray(x, dtype=float).reshape(-1)
        out: list = [_poly_eval(derivs[()], x)]
        for ell in range(1, p + 1):
            out.append(np.array([_poly_eval(derivs[idx], x) for idx in index_sets[ell]]))
        return out

    return oracle


def vector_polynomial_oracle(polys: list[dict], n: int, p: int) -> Callable[[np.ndarray], list]:
    """Oracle for m polynomial components; order-l output has leading axis m."""
    singles = [polynomial_oracle(q, n, p) for q in polys]

    def oracle(x: np.ndarray) -> list:
        per = [o(x) for o in singles]
        out: list = [np.array([pr[0] for pr in per])]
        for ell in range(1, p + 1):
            out.append(np.stack([np.asarray(pr[ell]) for pr in per]))
        return out

    return oracle


# -- built-in registry ---------------------------------------------------------

PROBLEM_NAMES = ("figure1", "quadratic", "rosenbrock2d", "wc-thm61", "wc-thm63", "wc-cor64")


def get_problem(name: str, p: int = 2, q: int = 1, eps: float = 0.25, **kw) -> Problem:
    """Instantiate a named problem; wc-* names wrap worst-case interpolants."""
    if name == "figure1":
        deg = max(p, 3)
        f_poly = {(1,): -0.4}
        c_poly = {(1,): 1.0, (2,): -1.0, (3,): 2.0}
        return Problem(
            n=1, m=1, p=deg,
            f_oracle=polynomial_oracle(f_poly, 1, deg),
            c_oracle=vector_polynomial_oracle([c_poly], 1, deg),
            h=make_h("abs"),
            feasible=FeasibleSet.all_space(),
            x0=np.array([kw.get("x0", 0.25)]),
            name="figure1",
        )
    if name == "quadratic":
        deg = max(p, 2)
        # constants valid on |x| <= 2, the region any reasonable run stays in
        lips = {j: 1.0 for j in range(deg + 1)}
        lips[0], lips[1] = 4.0, 2.0
        return Problem(
            n=1, m=0, p=deg,
            f_oracle=polynomial_oracle({(2,): 1.0}, 1, deg),
            c_oracle=None,
            h=make_h("zero"),
            feasible=FeasibleSet.all_space(),
            lipschitz_f=lips,
            w_low=0.0,
            x0=np.array([kw.get("x0", 1.0)]),
            name="quadratic",
        )
    if name == "rosenbrock2d":
        deg = max(p, 2)
        if deg > 4:
            raise InvalidArgumentError("rosenbrock2d supports degree <= 4")
        poly = {
            (0, 0): 1.0, (1, 0): -2.0, (2, 0): 1.0,
            (0, 2): 100.0, (2, 1): -200.0, (4, 0): 100.0,
        }
        return Problem(
            n=2, m=0, p=deg,
            f_oracle=polynomial_oracle(poly, 2, deg),
            c_oracle=None,
            h=make_h("zero"),
            feasible=FeasibleSet.all_space(),
            w_low=0.0,
            x0=np.asarray(kw.get("x0", (-0.5, 0.5)), dtype=float),
            name="rosenbrock2d",
        )
    if name in ("wc-thm61", "wc-thm63", "wc-cor64"):
        from . import worstcase  # local import to avoid a cycle

        if name == "wc-thm61":
            inst = worstcase.build_thm61(p, q, eps)
        elif name == "wc-thm63":
            inst = worstcase.build_thm63(p, max(q, 2), eps)
        else:
            inst = worstcase.build_cor64(p, eps)
        return worstcase.interpolant_problem(inst)
    raise UnknownProblemError(name)
