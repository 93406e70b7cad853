"""Problem layer: oracles, feasible sets, counters, smoothness constants."""

import math

import numpy as np
import pytest

from arqpc.composite import make_h
from arqpc.errors import InfeasiblePointError, UnknownProblemError
from arqpc.problems import (
    FeasibleSet,
    Problem,
    eval_w,
    get_problem,
    lw_constant,
    polynomial_oracle,
    taylor_at,
    vector_polynomial_oracle,
)
from arqpc.tensors import eval_taylor, shift_derivative, tensor_operator_norm

from conftest import fd_derivative


class TestFeasibleSets:
    def test_projection_idempotent_and_member(self, rng):
        sets = [
            FeasibleSet.all_space(),
            FeasibleSet.box([-1.0, -2.0], [0.5, 3.0]),
            FeasibleSet.l2_ball([0.5, 0.0], 2.0),
        ]
        for fs in sets:
            assert fs.is_convex
            for _ in range(50):
                x = rng.standard_normal(2) * 3
                px = fs.project(x)
                assert fs.member(px)
                assert np.allclose(fs.project(px), px, atol=1e-14)

    def test_member_batch_agrees(self, rng):
        fs = FeasibleSet.box([-1.0], [1.0])
        X = rng.uniform(-2, 2, (100, 1))
        mask = fs.member_batch(X)
        for i in range(100):
            assert mask[i] == fs.member(X[i])

    def test_segment_interval_ball(self):
        fs = FeasibleSet.l2_ball([0.0, 0.0], 1.0)
        lo, hi = fs.segment_interval(np.zeros(2), np.array([1.0, 0.0]))
        assert lo == pytest.approx(-1.0)
        assert hi == pytest.approx(1.0)

    def test_segment_interval_membership_property(self, rng):
        # sampled points strictly inside the slice are members; points past
        # either end are not
        sets = [
            FeasibleSet.box([-1.0, -0.5], [0.7, 2.0]),
            FeasibleSet.l2_ball([0.3, -0.2], 1.2),
        ]
        for fs in sets:
            for _ in range(40):
                base = fs.project(rng.uniform(-2, 2, 2))
                e = rng.standard_normal(2)
                lo, hi = fs.segment_interval(base, e)
                if hi <= lo:
                    continue
                span = hi - lo
                for t in rng.uniform(lo + 1e-9 * span, hi - 1e-9 * span, 5):
                    assert fs.member(base + t * e, tol=1e-9)
                if math.isfinite(lo):
                    assert not fs.member(base + (lo - 0.01 * max(span, 1.0)) * e)
                if math.isfinite(hi):
                    assert not fs.member(base + (hi + 0.01 * max(span, 1.0)) * e)


class TestEvalW:
    def test_figure1_values(self):
        prob = get_problem("figure1")
        assert eval_w(prob, [0.0]) == 0.0
        assert eval_w(prob, [1.0]) == pytest.approx(1.6, rel=1e-15)

    def test_non_composite_reduction(self):
        prob = get_problem("quadratic")
        assert eval_w(prob, [1.0]) == 1.0

    def test_infeasible_rejected(self):
        prob = Problem(
            n=1, m=0, p=2,
            f_oracle=polynomial_oracle({(2,): 1.0}, 1, 2),
            c_oracle=None, h=make_h("zero"),
            feasible=FeasibleSet.box([0.0], [1.0]),
        )
        with pytest.raises(InfeasiblePointError):
            eval_w(prob, [2.0])

    def test_counter_increments(self):
        prob = get_problem("quadratic")
        prob.counters.reset()
        eval_w(prob, [0.3])
        eval_w(prob, [0.4])
        assert prob.counters.w_evals == 2
        assert prob.counters.deriv_evals == 0


class TestTaylorAt:
    def test_figure1_models_at_zero(self):
        prob = get_problem("figure1", p=2)
        tf, tc = taylor_at(prob, [0.0], 2)
        # f part: -(2/5) s
        assert eval_taylor(tf, [0.5]) == pytest.approx(-0.2, rel=1e-15)
        # c part: s - s^2
        assert tc.components[0].eval([0.5]) == pytest.approx(0.25, rel=1e-14)

    def test_constant_function(self):
        prob = Problem(
            n=1, m=0, p=3,
            f_oracle=polynomial_oracle({(0,): 4.2}, 1, 3),
            c_oracle=None, h=make_h("zero"), feasible=FeasibleSet.all_space(),
        )
        tf, _ = taylor_at(prob, [1.3], 3)
        assert float(tf.terms[0].entries[0]) == 4.2
        for ell in range(1, 4):
            assert np.all(tf.terms[ell].entries == 0.0)

    def test_cubic_jets(self):
        # f(x) = x^3 at x = 1: value 1, f' = 3, f'' = 6, f''' = 6
        prob = Problem(
            n=1, m=0, p=3,
            f_oracle=polynomial_oracle({(3,): 1.0}, 1, 3),
            c_oracle=None, h=make_h("zero"), feasible=FeasibleSet.all_space(),
        )
        tf, _ = taylor_at(prob, [1.0], 3)
        jets = [float(t.entries[0]) for t in tf.terms]
        assert jets == [1.0, 3.0, 6.0, 6.0]
        fd = fd_derivative(lambda s: (1.0 + s[0]) ** 3, np.zeros(1), 1)
        assert fd[0] == pytest.approx(3.0, rel=1e-8)

    def test_cache_counts_once_per_point(self):
        prob = get_problem("figure1", p=3)
        prob.counters.reset()
        taylor_at(prob, [0.1], 3)
        taylor_at(prob, [0.1], 2)  # cached, truncation only
        taylor_at(prob, [0.1], 1)
        assert prob.counters.deriv_evals == 1
        taylor_at(prob, [0.2], 3)
        assert prob.counters.deriv_evals == 2


class TestLwConstant:
    def test_zero_h_takes_f_constants(self):
        prob = get_problem("quadratic", p=2)
        prob.lipschitz_f = {0: 1.0, 1: 1.0, 2: 1.0}
        assert lw_constant(prob) == 1.0

    def test_composite_formula(self):
        prob = Problem(
            n=1, m=1, p=2,
            f_oracle=polynomial_oracle({(1,): 1.0}, 1, 2),
            c_oracle=vector_polynomial_oracle([{(1,): 1.0}], 1, 2),
            h=make_h("abs"), feasible=FeasibleSet.all_space(),
            lipschitz_f={0: 1.0, 1: 2.0}, lipschitz_c={0: 1.0, 1: 1.0},
        )
        # max(1 + 1*1, 2 + 1*1) = 3
        assert lw_constant(prob) == 3.0

    def test_missing_constant_gives_none(self):
        prob = get_problem("figure1")
        assert lw_constant(prob) is None


class TestTaylorErrorBounds:
    """Model error against the smoothness constants on a known-smooth problem."""

    def _sin_problem(self, p=3):
        # f(x) = sin(x): all derivative norms and Lipschitz constants are <= 1
        def oracle(x):
            t = float(np.asarray(x).reshape(-1)[0])
            ders = [math.sin(t), math.cos(t), -math.sin(t), -math.cos(t), math.sin(t)]
            return [ders[0]] + [np.array([ders[ell]]) for ell in range(1, p + 1)]

        return Problem(
            n=1, m=0, p=p, f_oracle=oracle, c_oracle=None, h=make_h("zero"),
            feasible=FeasibleSet.all_space(),
            lipschitz_f={j: 1.0 for j in range(p + 1)}, w_low=-1.0,
        )

    def test_value_error_bound(self, rng):
        p = 3
        prob = self._sin_problem(p)
        for _ in range(50):
            x = rng.uniform(-2, 2, 1)
            s = rng.uniform(-1.5, 1.5, 1)
            tf, _ = taylor_at(prob, x, p)
            err = abs(math.sin(float(x[0] + s[0])) - eval_taylor(tf, s))
            bound = 1.0 / math.factorial(p + 1) * abs(float(s[0])) ** (p + 1)
            assert err <= bound + 1e-14

    def test_derivative_error_bound(self, rng):
        p = 3
        prob = self._sin_problem(p)
        ders = [math.sin, math.cos, lambda t: -math.sin(t), lambda t: -math.cos(t)]
        for _ in range(30):
            x = rng.uniform(-2, 2, 1)
            s = rng.uniform(-1.5, 1.5, 1)
            tf, _ = taylor_at(prob, x, p)
            for j in range(1, p + 1):
                approx = shift_derivative(tf, s, j)
                truth = ders[j](float(x[0] + s[0]))
                err = abs(tensor_operator_norm(approx) - abs(truth))
                bound = 1.0 / math.factorial(p - j + 1) * abs(float(s[0])) ** (p - j + 1)
                assert err <= bound + 1e-12


class TestRegistry:
    def test_known_names_build(self):
        for name in ("figure1", "quadratic", "rosenbrock2d"):
            prob = get_problem(name)
            assert prob.name == name

    def test_wc_names_build(self):
        prob = get_problem("wc-thm61", p=2, q=1, eps=0.25)
        assert prob.n == 1
        prob = get_problem("wc-cor64", p=2, eps=0.25)
        assert prob.m == 1

    def test_unknown_name(self):
        with pytest.raises(UnknownProblemError):
            get_problem("not-a-problem")
