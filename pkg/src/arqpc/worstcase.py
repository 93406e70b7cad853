"""Generators and replays for the slow-convergence instances.

Three families are built from closed-form node data: a monomial family where
the unit optimality radius is admissible, a linear family driven at radius
eps with order q > 2 (also usable at q = 2 without constraints), and a
composite wrapper of the first family behind an absolute value.  Each
instance carries the designated steps, the pinned regularization weight, and
an evaluable piecewise-Hermite realization of the node data.

Node-mode replays verify the prescribed trajectory through the compiled
kernels; interpolant mode hands an honest derivative oracle to the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .composite import make_h
from .errors import InvalidArgumentError, ReplayMismatchError
from .optimality import Certificate, PhiRecord
from .problems import FeasibleSet, Problem
from .solver import AlgoParams, IterationRecord, RunResult

__all__ = [
    "WorstCaseInstance",
    "build_thm61",
    "build_thm63",
    "build_cor64",
    "hermite_interpolant",
    "HermiteInterpolant",
    "interpolant_problem",
    "replay",
    "ceil_eps_power",
]

NODE_ARRAY_CAP = 1 << 22
INTERP_CAP = 1 << 16
TRACE_CAP = 1 << 12

_MISMATCH_REASONS = {
    1: "terminated before the prescribed count",
    2: "failed to terminate at the prescribed count",
    3: "model-decrease identity violated",
    4: "model descent violated",
    5: "inner function lost positivity",
    6: "iteration not successful",
    7: "node value left its bracket",
}


def ceil_eps_power(eps: float, num: int, den: int) -> int:
    """ceil(eps^(-num/den)) with a snap to integers within 1e-9 relative.

    The counts are ceilings of powers that are exact integers for dyadic
    tolerances with divisible exponents; the snap keeps float rounding from
    bumping those over to the next integer.
    """
    v = float(eps) ** (-num / den)
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, abs(v)):
        return int(r)
    return int(math.ceil(v))


@dataclass(frozen=True)
class WorstCaseInstance:
    """Closed-form node data of one slow instance.

    Node k carries the value f0_k and a single nonzero derivative
    (order `active_order`, value -coef_k); consecutive nodes differ by the
    designated step.  The composite kind reads the same data as the inner
    function behind an absolute value, with the outer objective zero.
    """

    kind: str  # thm61 | thm63 | cor64
    p: int
    q: int
    eps: float
    k_eps: int
    sigma: float
    delta_policy: str  # unit | eps
    f0_init: float

    @property
    def composite(self) -> bool:
        return self.kind == "cor64"

    @property
    def active_order(self) -> int:
        return 1 if self.kind == "thm63" else self.q

    def delta_vector(self) -> np.ndarray:
        return np.full(self.q, 1.0 if self.delta_policy == "unit" else self.eps)

    # -- closed-form node quantities ---------------------------------------

    def omega(self, ks: np.ndarray) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64)
        if self.kind == "thm63":
            return self.eps**self.q * ((self.k_eps - ks) / self.k_eps)
        return self.eps * ((self.k_eps - ks) / self.k_eps)

    def slope_coef(self, ks: np.ndarray) -> np.ndarray:
        """Magnitude of the single active derivative at each node."""
        om = self.omega(ks)
        if self.kind == "thm63":
            return (self.eps**self.q + om) / math.factorial(self.q)
        return self.eps + om

    def steps(self, ks: np.ndarray) -> np.ndarray:
        """Designated steps s_k (the models' global minimizers)."""
        A = self.slope_coef(ks)
        den = self.p if self.kind == "thm63" else self.p - self.q + 1
        if den == 1:
            return A
        if den == 2:
            return np.sqrt(A)
        if den == 4:
            return np.sqrt(np.sqrt(A))
        return A ** (1.0 / den)

    def decrements(self, ks: np.ndarray) -> np.ndarray:
        """f0_k - f0_{k+1}, equal to the model decrease at the designated step."""
        s_pow = self.steps(ks) ** (self.p + 1)
        if self.kind == "thm63":
            return (self.p / (self.p + 1.0)) * s_pow
        zeta = (self.p - self.q + 1) / ((self.p + 1) * math.factorial(self.q))
        return zeta * s_pow

    def node_arrays(self) -> dict:
        """Full node data (x, f0, jets' active coefficient, steps); guarded."""
        if self.k_eps > NODE_ARRAY_CAP:
            raise InvalidArgumentError(
                f"instance has {self.k_eps} nodes; materialize blocks instead"
            )
        ks = np.arange(self.k_eps + 1, dtype=np.int64)
        steps = self.steps(ks[:-1])
        x = np.zeros(self.k_eps + 1)
        np.cumsum(steps, out=x[1:])
        dec = self.decrements(ks[:-1])
        f0 = np.empty(self.k_eps + 1)
        f0[0] = self.f0_init
        f0[1:] = self.f0_init - np.cumsum(dec)
        return {"k": ks, "x": x, "f0": f0, "coef": self.slope_coef(ks), "s": steps}

    def node_jets(self) -> np.ndarray:
        """(k_eps+1, p+1) array of derivative values at the nodes (orders 0..p)."""
        data = self.node_arrays()
        jets = np.zeros((self.k_eps + 1, self.p + 1))
        jets[:, 0] = data["f0"]
        jets[:, self.active_order] = -data["coef"]
        return jets


def build_thm61(p: int, q: int, eps: float) -> WorstCaseInstance:
    """Monomial slow instance: count ceil(eps^-(p+1)/(p-q+1)), unit radii."""
    if not (1 <= q <= p):
        raise InvalidArgumentError("need 1 <= q <= p")
    if not (0.0 < eps < 1.0):
        raise InvalidArgumentError("need eps in (0, 1)")
    k_eps = ceil_eps_power(eps, p + 1, p - q + 1)
    sigma = math.factorial(p) / math.factorial(q - 1)
    f0 = 2.0 ** (1.0 + (p + 1.0) / (p - q + 1.0))
    return WorstCaseInstance("thm61", p, q, eps, k_eps, sigma, "unit", f0)


def build_thm63(p: int, q: int, eps: float) -> WorstCaseInstance:
    """Linear slow instance driven at radius eps: count ceil(eps^-q(p+1)/p).

    Stated for orders above two; also accepted at q = 2 for the
    unconstrained variant.
    """
    if q < 2:
        raise InvalidArgumentError("this family needs q >= 2")
    if not (0.0 < eps <= 0.5):
        raise InvalidArgumentError("need eps <= 1/2")
    k_eps = ceil_eps_power(eps, q * (p + 1), p)
    sigma = float(math.factorial(p))
    f0 = 2.0 ** (1.0 + q * (p + 1.0) / p)
    return WorstCaseInstance("thm63", p, q, eps, k_eps, sigma, "eps", f0)


def build_cor64(p: int, eps: float) -> WorstCaseInstance:
    """Composite wrapper: |c| with c the positive monomial-instance function.

    First-order composite slowness at count ceil(eps^-(p+1)/p); node data and
    designated steps coincide with the order-1 monomial instance.
    """
    base = build_thm61(p, 1, eps)
    k_eps = ceil_eps_power(eps, p + 1, p)
    if k_eps != base.k_eps:
        raise InvalidArgumentError("count mismatch against the wrapped instance")
    return WorstCaseInstance("cor64", p, 1, eps, k_eps, base.sigma, "unit", base.f0_init)


# -- piecewise Hermite realization ----------------------------------------------


def _hermite_interval_coeffs(jets_l: np.ndarray, jets_r: np.ndarray, h: float) -> np.ndarray:
    """Monomial coefficients (ascending, in the local coordinate u) of the
    degree-(2p+1) polynomial matching both endpoint jets.

    Works in u = (x - x_l)/h with scaled jets g^(j)(0) = F^(j)(x_l) h^j, via a
    divided-difference tableau with repeated nodes; the local coordinate keeps
    the tableau well conditioned even for short intervals.
    """
    pp = jets_l.size - 1
    m = 2 * (pp + 1)
    z = np.array([0.0] * (pp + 1) + [1.0] * (pp + 1))
    scaled_l = np.array([jets_l[j] * h**j for j in range(pp + 1)])
    scaled_r = np.array([jets_r[j] * h**j for j in range(pp + 1)])

    # dd[i][r] holds the divided difference over z[i..i+r]
    dd = np.zeros((m, m))
    for i in range(m):
        dd[i][0] = scaled_l[0] if z[i] == 0.0 else scaled_r[0]
    for r in range(1, m):
        for i in range(m - r):
            if z[i] == z[i + r]:
                g = scaled_l if z[i] == 0.0 else scaled_r
                dd[i][r] = g[r] / math.factorial(r)
            else:
                dd[i][r] = (dd[i + 1][r - 1] - dd[i][r - 1]) / (z[i + r] - z[i])

    coeffs = np.zeros(m)
    basis = np.zeros(m)
    basis[0] = 1.0
    deg = 0
    coeffs[0] = dd[0][0]
    for r in range(1, m):
        # basis *= (u - z[r-1])
        shifted = np.zeros(m)
        shifted[1 : deg + 2] = basis[: deg + 1]
        basis = shifted - z[r - 1] * np.concatenate([basis[: deg + 1], np.zeros(m - deg - 1)])
        deg += 1
        coeffs += dd[0][r] * basis
    return coeffs


class HermiteInterpolant:
    """Piecewise two-point Hermite interpolant of the node jets.

    On each interval the unique degree-(2p+1) polynomial matching all
    derivative values of orders 0..p at both endpoints; beyond the node range,
    the degree-p Taylor extension from the boundary node.  Derivatives up to
    order p are continuous across nodes by construction.
    """

    def __init__(self, x_nodes: np.ndarray, jets: np.ndarray):
        x_nodes = np.asarray(x_nodes, dtype=float)
        jets = np.asarray(jets, dtype=float)
        if np.any(np.diff(x_nodes) <= 0):
            raise InvalidArgumentError("nodes must be strictly increasing")
        self.x_nodes = x_nodes
        self.jets = jets
        self.p = jets.shape[1] - 1
        self._coeffs = lru_cache(maxsize=4096)(self._build_interval)

    def _build_interval(self, i: int) -> tuple[np.ndarray, float]:
        h = self.x_nodes[i + 1] - self.x_nodes[i]
        return _hermite_interval_coeffs(self.jets[i], self.jets[i + 1], h), h

    def jets_at(self, x: float) -> np.ndarray:
        """Derivative values of orders 0..p at x."""
        xs = self.x_nodes
        if x <= xs[0]:
            return self._taylor_jets(0, x - xs[0])
        if x >= xs[-1]:
            return self._taylor_jets(len(xs) - 1, x - xs[-1])
        i = int(np.searchsorted(xs, x, side="right") - 1)
        co, h = self._coeffs(i)
        u = (x - xs[i]) / h
        out = np.empty(self.p + 1)
        c = co
        scale = 1.0
        for j in range(self.p + 1):
            acc = 0.0
            for cc in c[::-1]:
                acc = acc * u + cc
            out[j] = acc / scale
            c = c[1:] * np.arange(1, c.size)
            scale *= h
        return out

    def _taylor_jets(self, node: int, dx: float) -> np.ndarray:
        base = self.jets[node]
        out = np.empty(self.p + 1)
        for j in range(self.p + 1):
            acc = 0.0
            for ell in range(self.p, j - 1, -1):
                acc = acc * dx + base[ell] / math.factorial(ell - j)
            out[j] = acc
        return out

    def __call__(self, x: float) -> float:
        return float(self.jets_at(float(x))[0])


def hermite_interpolant(instance: WorstCaseInstance, pad: int = 0) -> HermiteInterpolant:
    """Piecewise Hermite realization of the instance's node jets.

    With pad = 0 each piece is the classical two-point polynomial of degree
    2p+1.  A positive pad appends that many zero derivative orders to every
    node jet (degree 2(p+pad)+1 pieces): the realized function still matches
    the prescribed jets, but its next derivatives vanish at the nodes, which
    freezes the one-ulp-per-step drift an honest solver would otherwise
    amplify geometrically while walking the nodes.
    """
    if instance.k_eps > INTERP_CAP:
        raise InvalidArgumentError(
            "interpolant mode materializes all nodes; instance too large"
        )
    data = instance.node_arrays()
    jets = instance.node_jets()
    if pad > 0:
        jets = np.hstack([jets, np.zeros((jets.shape[0], pad))])
    return HermiteInterpolant(data["x"], jets)


def interpolant_problem(instance: WorstCaseInstance, stabilized: bool = True) -> Problem:
    """Honest derivative oracle backed by the Hermite realization.

    `stabilized` selects the jet-padded realization (see hermite_interpolant),
    under which an honest run tracks the prescribed trajectory to round-off.
    """
    interp = hermite_interpolant(instance, pad=2 if stabilized else 0)
    p = instance.p

    def jets_oracle(x: np.ndarray) -> list:
        jets = interp.jets_at(float(np.asarray(x).reshape(-1)[0]))
        return [float(jets[0])] + [np.array([jets[ell]]) for ell in range(1, p + 1)]

    if instance.composite:
        def c_oracle(x: np.ndarray) -> list:
            jets = interp.jets_at(float(np.asarray(x).reshape(-1)[0]))
            return [np.array([jets[0]])] + [np.array([[jets[ell]]]) for ell in range(1, p + 1)]

        def f_zero(x: np.ndarray) -> list:
            return [0.0] + [np.array([0.0]) for _ in range(p)]

        return Problem(
            n=1, m=1, p=p, f_oracle=f_zero, c_oracle=c_oracle, h=make_h("abs"),
            feasible=FeasibleSet.all_space(), x0=np.array([0.0]),
            name=f"wc-{instance.kind}", w_low=0.0,
        )
    return Problem(
        n=1, m=0, p=p, f_oracle=jets_oracle, c_oracle=None, h=make_h("zero"),
        feasible=FeasibleSet.all_space(), x0=np.array([0.0]),
        name=f"wc-{instance.kind}", w_low=0.0,
    )


# -- node-mode replay -------------------------------------------------------------


def default_replay_params(instance: WorstCaseInstance) -> AlgoParams:
    """Parameters under which the prescribed trajectory is a valid run:
    the regularization weight is pinned via sigma_min = sigma0 = the instance
    weight (an all-successful run would otherwise drift below it)."""
    return AlgoParams(
        q=instance.q,
        eps=(instance.eps,) * instance.q,
        theta=0.5,
        delta0=tuple(instance.delta_vector()),
        sigma0=instance.sigma,
        sigma_min=instance.sigma,
        eta1=0.05,
        eta2=0.95,
    )


def _run_kernel(instance: WorstCaseInstance, eta1: float, force_backend: str | None):
    stride = max(1, instance.k_eps >> 16)
    if instance.kind == "thm63":
        fq = float(math.factorial(instance.q))
        thr_low = min(
            instance.eps * instance.eps**j / math.factorial(j)
            for j in range(1, instance.q)
        )
        return _kernels.replay_linear(
            instance.k_eps, instance.eps, instance.q, instance.p, fq, thr_low,
            instance.f0_init, eta1, stride, force_backend=force_backend,
        )
    zeta = (instance.p - instance.q + 1) / ((instance.p + 1) * math.factorial(instance.q))
    return _kernels.replay_monomial(
        instance.k_eps, instance.eps,
        1.0 / (instance.p - instance.q + 1),
        zeta, float(math.factorial(instance.q)), float(math.factorial(instance.p + 1)),
        instance.sigma, instance.f0_init, eta1, stride, instance.composite,
        instance.q, instance.p, force_backend=force_backend,
    )


def _terminal_certificate(instance: WorstCaseInstance, final_x: float) -> Certificate:
    """Closed-form certificate at the terminal node (the node models are
    monomials, so the ball minimum is explicit and the gap is zero)."""
    recs = []
    eps, q = instance.eps, instance.q
    delta = instance.delta_vector()
    for j in range(1, q + 1):
        dj = float(delta[j - 1])
        thr = eps * dj**j / math.factorial(j)
        if instance.kind == "thm63":
            phi = (eps**q / math.factorial(q)) * dj
        else:
            phi = (eps / math.factorial(q)) * dj**q if j == q else 0.0
        recs.append(PhiRecord(j, dj, phi, thr, 0.0, phi <= thr))
    return Certificate(np.array([final_x]), tuple(recs), source="replay")


def _replay_trace(instance: WorstCaseInstance, params: AlgoParams) -> tuple[list, int]:
    """Materialized trace (decimated above TRACE_CAP iterations).

    The recorded ratio is the achieved decrease against the full regularized
    model's decrease, which the construction makes exactly one.
    """
    stride = 1
    if instance.k_eps > TRACE_CAP:
        stride = -(-instance.k_eps // TRACE_CAP)
    data_ks = np.arange(0, instance.k_eps, stride, dtype=np.int64)
    steps = instance.steps(data_ks)
    dec_sel = instance.decrements(data_ks)
    if instance.kind == "thm63":
        tdec = dec_sel * (instance.p + 1.0) / instance.p
    else:
        zeta = (instance.p - instance.q + 1) / ((instance.p + 1) * math.factorial(instance.q))
        tdec = dec_sel / (zeta * math.factorial(instance.q))
    # x and f0 need full prefixes; recompute cheaply in blocks when decimated
    if stride == 1:
        full = instance.node_arrays()
        xs, f0s = full["x"][:-1], full["f0"][:-1]
    else:
        all_ks = np.arange(instance.k_eps, dtype=np.int64)
        dec = instance.decrements(all_ks)
        s_all = instance.steps(all_ks)
        csum_x = np.concatenate([[0.0], np.cumsum(s_all)])
        csum_f = np.concatenate([[0.0], np.cumsum(dec)])
        xs = csum_x[data_ks]
        f0s = instance.f0_init - csum_f[data_ks]
    recs = []
    delta = tuple(instance.delta_vector())
    for i, k in enumerate(data_ks):
        recs.append(
            IterationRecord(
                int(k), np.array([xs[i]]), float(f0s[i]), instance.sigma, delta,
                np.array([steps[i]]), float(steps[i]), 1.0, True,
                (int(k) + 2, int(k) + 2), (), (), hook_used=True,
                taylor_dec=float(tdec[i]),
            )
        )
    return recs, stride


def replay(instance: WorstCaseInstance, params: AlgoParams | None = None,
           force_backend: str | None = None, with_trace: bool = True) -> RunResult:
    """Verify the prescribed trajectory in node mode and return its run record.

    Checks, per iteration: the strong test fails before the prescribed count
    and first passes exactly there; every iteration is successful; the
    achieved decrease equals the regularized model's decrease (the recorded
    ratio of one); and, on a strided sample, the designated step's descent,
    the model-decrease identity, and inner-function positivity.  Any
    deviation raises ReplayMismatchError with the first divergent iteration.
    """
    if params is None:
        params = default_replay_params(instance)
    if params.sigma0 != instance.sigma:
        raise InvalidArgumentError("replay requires sigma0 pinned to the instance weight")
    status, fail_k, n_success, rho_err, min_rt, max_rt, final_x, final_f0 = _run_kernel(
        instance, params.eta1, force_backend
    )
    if status != 0:
        raise ReplayMismatchError(int(fail_k), _MISMATCH_REASONS.get(int(status), "unknown"))
    if rho_err > 1e-5:
        raise ReplayMismatchError(int(instance.k_eps), "achieved/model ratio drifted from one")

    trace, stride = _replay_trace(instance, params) if with_trace else ([], TRACE_CAP)
    cert = _terminal_certificate(instance, float(final_x))
    expected_rt = (
        instance.p / (instance.p + 1.0)
        if instance.kind == "thm63"
        else (instance.p - instance.q + 1.0) / (instance.p + 1.0)
    )
    return RunResult(
        termination="step1",
        certificate=cert,
        trace=trace,
        iterations=int(instance.k_eps),
        n_success=int(n_success),
        w_evals=int(instance.k_eps) + 1,
        deriv_evals=int(instance.k_eps) + 1,
        final_x=np.array([final_x]),
        final_w=float(final_f0),
        replay_info={
            "kind": instance.kind,
            "k_eps": int(instance.k_eps),
            "matched": True,
            "rho_model_max_err": float(rho_err),
            "rho_taylor_range": (float(min_rt), float(max_rt)),
            "rho_taylor_expected": expected_rt,
            "trace_stride": stride,
            "backend": force_backend or _kernels.backend(),
        },
    )
