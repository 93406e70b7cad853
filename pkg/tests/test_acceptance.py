"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run as `pytest -v -s tests/test_acceptance.py` to see the per-criterion lines.
Every tolerance is pinned here; nothing defers to later calibration.
"""

import math
import time

import numpy as np
import pytest

from arqpc.cli import fit_exponent
from arqpc.composite import make_h
from arqpc.optimality import CompositeObjective, GridSpec, global_min_ball, phi_w, strong_check
from arqpc.problems import (
    FeasibleSet,
    Problem,
    get_problem,
    polynomial_oracle,
)
from arqpc.solver import AlgoParams, iteration_bound_check, run
from arqpc.tensors import (
    SymTensor,
    TaylorPoly,
    VecTaylorPoly,
    eval_taylor,
    reg_derivative_norm,
    reg_derivative_tensor,
    shift_derivative,
    tensor_operator_norm,
)
from arqpc.worstcase import build_cor64, build_thm61, build_thm63, interpolant_problem, replay

from conftest import exact_keps_dyadic, fd_derivative, random_taylor_poly

THM61_GRID = [(1, 1), (2, 1), (2, 2), (3, 2)]
THM63_GRID = [(3, 3), (4, 3)]


def report(num: int, name: str, failures: list):
    status = "PASS" if not failures else "FAIL"
    print(f"[acceptance] criterion {num:02d} {status}: {name}")
    assert not failures, f"criterion {num} failed: {failures[:5]}"


# ---------------------------------------------------------------------------
# shared solver runs (consumed by criteria 6, 7, 8, 11, 12)
# ---------------------------------------------------------------------------


def _random_1d_quartic(rng):
    c = {
        (4,): float(rng.uniform(0.5, 1.0)),
        (3,): float(rng.uniform(-1, 1)),
        (2,): float(rng.uniform(-1, 1)),
        (1,): float(rng.uniform(-1, 1)),
    }
    xs = np.linspace(-4, 4, 4001)

    def dmax(order):
        vals = np.zeros_like(xs)
        for expo, coef in c.items():
            e = expo[0]
            if e >= order:
                fall = math.factorial(e) / math.factorial(e - order)
                vals += coef * fall * xs ** (e - order)
        return float(np.max(np.abs(vals)))

    lips = {j: max(1.0, 1.05 * dmax(j + 1)) for j in range(4)}
    prob = Problem(
        n=1, m=0, p=3, f_oracle=polynomial_oracle(c, 1, 3), c_oracle=None,
        h=make_h("zero"), feasible=FeasibleSet.all_space(), lipschitz_f=lips,
        x0=np.array([float(rng.uniform(-1, 1))]), name="rand-quartic-1d",
    )
    return prob


def _random_2d_poly(rng):
    a, b = rng.uniform(-0.5, 0.5, 2)
    c20, c02 = rng.uniform(0.5, 1.5, 2)
    c11 = float(rng.uniform(-0.4, 0.4))
    c4 = float(rng.uniform(0.05, 0.2))
    poly = {
        (2, 0): c20, (0, 2): c02, (1, 1): c11,
        (1, 0): -2 * c20 * a - c11 * b, (0, 1): -2 * c02 * b - c11 * a,
        (4, 0): c4, (0, 4): c4,
    }
    oracle = polynomial_oracle(poly, 2, 2)
    deep_oracle = polynomial_oracle(poly, 2, 3)  # one extra order for the bounds

    # derivative-norm bounds over the region any run stays in
    from arqpc.tensors import frobenius_bound

    grid = np.linspace(-5, 5, 21)
    lips = {}
    for j in range(3):
        worst = 0.0
        for gx in grid:
            for gy in grid:
                raw = deep_oracle(np.array([gx, gy]))
                arr = np.asarray(raw[j + 1])
                t = (
                    SymTensor(j + 1, 2, arr)
                    if arr.ndim == 1
                    else SymTensor.from_dense(arr, 2)
                )
                worst = max(worst, frobenius_bound(t))
        lips[j] = max(1.0, 1.2 * worst)
    prob = Problem(
        n=2, m=0, p=2, f_oracle=oracle, c_oracle=None, h=make_h("zero"),
        feasible=FeasibleSet.all_space(), lipschitz_f=lips,
        x0=rng.uniform(-1, 1, 2), name="rand-poly-2d",
    )
    return prob


@pytest.fixture(scope="module")
def solver_runs():
    """Twenty random declared-constant problems plus named runs, solved once."""
    rng = np.random.default_rng(11)
    runs = []
    params_1d = AlgoParams(q=1, eps=(1e-2,), sigma0=1.0, eta2=0.9, gamma3=4.0, seed=5)
    for i in range(15):
        prob = _random_1d_quartic(rng)
        runs.append(("1d-%d" % i, prob, params_1d, run(prob, params_1d)))
    params_2d = AlgoParams(q=1, eps=(1e-2,), sigma0=1.0, eta2=0.9, gamma3=4.0, seed=5)
    for i in range(5):
        prob = _random_2d_poly(rng)
        runs.append(("2d-%d" % i, prob, params_2d, run(prob, params_2d)))

    fig = get_problem("figure1", p=3)
    params_fig = AlgoParams(q=2, eps=(0.05, 0.05), sigma0=1.0, seed=1)
    runs.append(("figure1", fig, params_fig, run(fig, params_fig)))

    # interpolant-mode honest replay (also criterion 12)
    inst = build_thm61(2, 1, 0.25)
    wc_prob = interpolant_problem(inst)
    from arqpc.worstcase import default_replay_params

    wc_params = default_replay_params(inst)
    runs.append(("wc-honest", wc_prob, wc_params, run(wc_prob, wc_params, x0=[0.0])))
    return runs


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_criterion_01_thm61_sharpness_counts():
    failures = []
    t0 = time.perf_counter()
    for (p, q) in THM61_GRID:
        for e in range(2, 9):
            inst = build_thm61(p, q, 2.0**-e)
            expected = exact_keps_dyadic(e, p + 1, p - q + 1)
            try:
                r = replay(inst, with_trace=False)
            except Exception as exc:  # replay raises on any trajectory deviation
                failures.append((p, q, e, repr(exc)))
                continue
            if r.iterations != expected or inst.k_eps != expected:
                failures.append((p, q, e, "count", r.iterations, expected))
            if r.n_success != expected:
                failures.append((p, q, e, "successes", r.n_success))
            if r.replay_info["rho_model_max_err"] > 1e-5:
                failures.append((p, q, e, "rho", r.replay_info["rho_model_max_err"]))
    elapsed = time.perf_counter() - t0
    if elapsed >= 5.0:
        failures.append(("runtime", elapsed))
    report(1, f"thm61 node replays exact (runtime {elapsed:.2f}s)", failures)


def test_criterion_02_thm63_sharpness_counts():
    failures = []
    t0 = time.perf_counter()
    for (p, q) in THM63_GRID:
        for e in range(1, 5):
            inst = build_thm63(p, q, 2.0**-e)
            expected = exact_keps_dyadic(e, q * (p + 1), p)
            try:
                r = replay(inst, with_trace=False)
            except Exception as exc:
                failures.append((p, q, e, repr(exc)))
                continue
            if r.iterations != expected or inst.k_eps != expected:
                failures.append((p, q, e, "count", r.iterations, expected))
    elapsed = time.perf_counter() - t0
    if elapsed >= 5.0:
        failures.append(("runtime", elapsed))
    report(2, f"thm63 node replays exact (runtime {elapsed:.2f}s)", failures)


def test_criterion_03_composite_wrapper_counts():
    failures = []
    for p in (2, 3):
        for e in range(2, 7):
            inst = build_cor64(p, 2.0**-e)
            expected = exact_keps_dyadic(e, p + 1, p)
            try:
                r = replay(inst, with_trace=False)
            except Exception as exc:
                failures.append((p, e, repr(exc)))
                continue
            if r.iterations != expected:
                failures.append((p, e, "count", r.iterations, expected))
    report(3, "composite wrapper replays exact", failures)


def test_criterion_04_exponent_fits():
    failures = []
    eps61 = [2.0**-e for e in range(2, 10)]
    counts61 = [replay(build_thm61(2, 1, e), with_trace=False).iterations for e in eps61]
    slope61 = fit_exponent(eps61, counts61)
    if abs(slope61 - 1.5) > 0.1:
        failures.append(("thm61 slope", slope61))
    eps63 = [2.0**-e for e in range(1, 5)]
    counts63 = [replay(build_thm63(3, 3, e), with_trace=False).iterations for e in eps63]
    slope63 = fit_exponent(eps63, counts63)
    if abs(slope63 - 4.0) > 0.15:
        failures.append(("thm63 slope", slope63))
    report(4, f"exponent fits (thm61 {slope61:.3f} vs 1.5, thm63 {slope63:.3f} vs 4.0)",
           failures)


def test_criterion_05_figure1_values():
    failures = []
    prob = get_problem("figure1", p=2)
    val, gap = phi_w(prob, [0.0], 2, 1.0)
    if abs(val - 0.4) > max(1e-3, gap):
        failures.append(("phi at radius 1", val, gap))
    val2, gap2 = phi_w(prob, [0.0], 2, 0.25)
    if val2 > gap2:
        failures.append(("phi at radius 0.25", val2, gap2))
    # inner minimizer of the truncated model at radius 1 sits at d = 1
    from arqpc.problems import taylor_at

    tf, tc = taylor_at(prob, [0.0], prob.p)
    obj = CompositeObjective(tf.truncate(2), tc.truncate(2), prob.h)
    res = global_min_ball(obj, np.zeros(1), 1.0, prob.feasible)
    if abs(res.d[0] - 1.0) > 1e-3:
        failures.append(("inner minimizer", res.d[0]))
    report(5, f"figure1 values (phi={val:.4f}, argmin={res.d[0]:.4f})", failures)


def test_criterion_06_sigma_ceiling(solver_runs):
    failures = []
    checked = 0
    for name, prob, params, result in solver_runs:
        if not name.startswith(("1d-", "2d-")):
            continue
        checked += 1
        lwp = prob.lipschitz_f[prob.p]
        bound = max(params.sigma0, params.gamma3 * lwp / (1.0 - params.eta2))
        for rec in result.trace:
            if rec.sigma > bound * (1 + 1e-12):
                failures.append((name, rec.k, rec.sigma, bound))
        if result.termination not in ("step1", "step2"):
            failures.append((name, "termination", result.termination))
    if checked != 20:
        failures.append(("expected 20 random problems", checked))
    report(6, f"sigma ceiling on {checked} random declared-constant runs", failures)


def test_criterion_07_model_decrease_inequality(solver_runs):
    failures = []
    checked = 0
    entries = [(name, prob.p, result) for name, prob, _, result in solver_runs]
    inst_a = build_thm61(2, 2, 2.0**-4)
    entries.append(("replay61", inst_a.p, replay(inst_a)))
    inst_b = build_thm63(3, 3, 2.0**-2)
    entries.append(("replay63", inst_b.p, replay(inst_b)))
    for name, p, result in entries:
        for rec in result.trace:
            if rec.s is None or not math.isfinite(rec.taylor_dec):
                continue
            checked += 1
            reg = rec.sigma / math.factorial(p + 1) * rec.step_norm ** (p + 1)
            if rec.taylor_dec < reg - 1e-10:
                failures.append((name, rec.k, rec.taylor_dec, reg))
    report(7, f"predicted decrease dominates the regularizer term ({checked} steps)",
           failures)


def test_criterion_08_iteration_bound(solver_runs):
    failures = []
    for name, prob, params, result in solver_runs:
        sigma_max = max((r.sigma for r in result.trace), default=params.sigma0)
        if not iteration_bound_check(result.trace, sigma_max, params):
            failures.append(name)
    report(8, "success/failure accounting bound on every recorded prefix", failures)


def test_criterion_09_oracle_equivalence():
    rng = np.random.default_rng(99)
    failures = []
    for i in range(100):
        f_jets = rng.uniform(-2, 2, 5)
        c_jets = rng.uniform(-2, 2, 5)
        smooth = TaylorPoly(np.zeros(1), tuple(SymTensor(l, 1, [v]) for l, v in enumerate(f_jets)))
        inner = VecTaylorPoly(
            (TaylorPoly(np.zeros(1), tuple(SymTensor(l, 1, [v]) for l, v in enumerate(c_jets))),)
        )
        obj = CompositeObjective(smooth, inner, make_h("abs"))
        delta = float(rng.uniform(0.2, 1.0))
        res = global_min_ball(obj, np.zeros(1), delta, FeasibleSet.all_space())
        ts = np.linspace(-delta, delta, 1_000_000)
        ref = float(np.min(obj.batch(ts[:, None])))
        if abs(res.value - ref) > res.gap:
            failures.append((i, res.value, ref, res.gap))
    report(9, "inner minimization matches 1e6-point dense scans (100/100)", failures)


def test_criterion_10_calculus_checks():
    rng = np.random.default_rng(7)
    failures = []
    # shifted-derivative tensors against central finite differences
    for i in range(200):
        n = int(rng.integers(1, 4))
        degree = int(rng.integers(2, 5))
        poly = random_taylor_poly(rng, n, degree)
        s = rng.uniform(-1, 1, n) * 2 / math.sqrt(n)
        j = int(rng.integers(1, 3))
        exact = shift_derivative(poly, s, j).to_dense()
        fd = fd_derivative(lambda d: eval_taylor(poly, d), s, j)
        err = np.max(np.abs(np.asarray(exact).reshape(-1) - np.asarray(fd).reshape(-1)))
        scale = 1.0 + np.max(np.abs(exact))
        if err > 1e-5 * scale:
            failures.append(("fd", i, err))
    # regularizer norm identity
    for i in range(60):
        n = int(rng.integers(1, 4))
        p = int(rng.integers(1, 6))
        s = rng.standard_normal(n)
        for j in range(0, 3):
            t = reg_derivative_tensor(s, p, j)
            ref = reg_derivative_norm(s, p, j)
            if abs(tensor_operator_norm(t) - ref) > 1e-10 * (1 + ref):
                failures.append(("reg", i, j))
    # Taylor error bounds on a smooth function with unit constants
    def sin_oracle(x):
        t = float(np.asarray(x).reshape(-1)[0])
        ders = [math.sin(t), math.cos(t), -math.sin(t), -math.cos(t)]
        return [ders[0]] + [np.array([d]) for d in ders[1:]]

    prob = Problem(n=1, m=0, p=3, f_oracle=sin_oracle, c_oracle=None,
                   h=make_h("zero"), feasible=FeasibleSet.all_space(),
                   lipschitz_f={j: 1.0 for j in range(4)})
    from arqpc.problems import taylor_at

    for i in range(200):
        x = rng.uniform(-3, 3, 1)
        s = rng.uniform(-1.5, 1.5, 1)
        tf, _ = taylor_at(prob, x, 3)
        err = abs(math.sin(float(x[0] + s[0])) - eval_taylor(tf, s))
        if err > abs(float(s[0])) ** 4 / 24.0 + 1e-14:
            failures.append(("taylor", i, err))
    report(10, "calculus checks (200 fd cases, norm identity, Taylor bounds)", failures)


def test_criterion_11_certificate_soundness(solver_runs):
    failures = []
    checked = 0
    for name, prob, params, result in solver_runs:
        if result.termination not in ("step1", "step2") or result.certificate is None:
            continue
        checked += 1
        cert = result.certificate
        fine = GridSpec().doubled()
        delta = [r.radius for r in cert.records]
        recheck = strong_check(prob, result.final_x, params.eps, delta, fine)
        for orig, rec in zip(cert.records, recheck.records):
            if rec.phi > rec.threshold + 2.0 * orig.gap:
                failures.append((name, rec.order, rec.phi, rec.threshold, orig.gap))
    report(11, f"terminations re-verified at doubled resolution ({checked} runs)",
           failures)


def test_criterion_12_honest_solver_consistency(solver_runs):
    failures = []
    inst = build_thm61(2, 1, 0.25)
    result = next(r for name, _, _, r in solver_runs if name == "wc-honest")
    if not (inst.k_eps <= result.iterations <= inst.k_eps + 2):
        failures.append(("iterations", result.iterations, inst.k_eps))
    node_terminal = inst.node_arrays()["x"][-1]
    if abs(result.final_x[0] - node_terminal) > 1e-3:
        failures.append(("final x", result.final_x[0], node_terminal))
    report(12, f"honest solve of the realized instance ({result.iterations} iters)",
           failures)
