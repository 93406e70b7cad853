"""Tensor arithmetic: evaluation, shifted derivatives, regularizer identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arqpc.errors import DimensionMismatchError, InvalidArgumentError, SingularPointError
from arqpc.tensors import (
    SymTensor,
    TaylorPoly,
    eval_taylor,
    reg_derivative_norm,
    reg_derivative_tensor,
    shift_derivative,
    sorted_multi_indices,
    tensor_operator_norm,
)

from conftest import brute_force_eval, fd_derivative, random_taylor_poly


def make_1d(*vals):
    return TaylorPoly(np.zeros(1), tuple(SymTensor(ell, 1, [v]) for ell, v in enumerate(vals)))


class TestEvalTaylor:
    def test_constant_term(self):
        poly = make_1d(1.0, 2.0, 2.0)
        assert eval_taylor(poly, [0.0]) == 1.0

    def test_direct_arithmetic(self):
        poly = make_1d(1.0, 2.0, 2.0)
        # 1 + 2*0.5 + (2/2)*0.25
        assert eval_taylor(poly, [0.5]) == pytest.approx(2.25, rel=0, abs=1e-15)

    def test_matches_brute_force_2d(self, rng):
        for _ in range(25):
            poly = random_taylor_poly(rng, 2, 3)
            s = rng.standard_normal(2)
            ref = brute_force_eval(poly, s)
            assert eval_taylor(poly, s) == pytest.approx(ref, rel=1e-12)

    def test_matches_brute_force_3d(self, rng):
        for _ in range(10):
            poly = random_taylor_poly(rng, 3, 4)
            s = rng.standard_normal(3)
            assert eval_taylor(poly, s) == pytest.approx(brute_force_eval(poly, s), rel=1e-12)

    def test_batch_matches_scalar(self, rng):
        poly = random_taylor_poly(rng, 2, 3)
        D = rng.standard_normal((64, 2))
        batch = poly.eval_batch(D)
        for i in range(D.shape[0]):
            assert batch[i] == pytest.approx(poly.eval(D[i]), rel=1e-13)

    def test_dimension_mismatch(self):
        poly = make_1d(1.0, 2.0)
        with pytest.raises(DimensionMismatchError):
            eval_taylor(poly, [1.0, 2.0])


class TestShiftDerivative:
    def test_zeroth_is_value(self, rng):
        poly = random_taylor_poly(rng, 2, 3)
        s = rng.standard_normal(2)
        t = shift_derivative(poly, s, 0)
        assert t.order == 0
        assert float(t.entries[0]) == pytest.approx(eval_taylor(poly, s), rel=1e-13)

    def test_linear_term_constant_derivative(self):
        poly = make_1d(0.0, -0.2, 0.0)
        for s in (0.0, 0.3, -1.7):
            t = shift_derivative(poly, [s], 1)
            assert float(t.entries[0]) == pytest.approx(-0.2, abs=1e-15)

    def test_matches_finite_differences(self, rng):
        for n in (1, 2):
            for _ in range(8):
                poly = random_taylor_poly(rng, n, 3)
                s = rng.uniform(-1.0, 1.0, n)
                g = shift_derivative(poly, s, 1).to_dense().reshape(-1)
                g_fd = fd_derivative(lambda d: eval_taylor(poly, d), s, 1)
                assert np.allclose(g, g_fd, atol=1e-6, rtol=1e-5)
                H = shift_derivative(poly, s, 2).to_dense().reshape(n, n)
                H_fd = fd_derivative(lambda d: eval_taylor(poly, d), s, 2)
                assert np.allclose(H, H_fd, atol=2e-5, rtol=1e-4)

    def test_taylor_shift_consistency(self, rng):
        # re-expanding at s and evaluating at d must reproduce eval at s + d
        poly = random_taylor_poly(rng, 2, 4)
        s = rng.standard_normal(2) * 0.5
        d = rng.standard_normal(2) * 0.5
        terms = tuple(
            shift_derivative(poly, s, j) for j in range(poly.degree + 1)
        )
        shifted = TaylorPoly(poly.base_point + s, terms)
        assert eval_taylor(shifted, d) == pytest.approx(eval_taylor(poly, s + d), rel=1e-11)

    def test_order_out_of_range(self, rng):
        poly = random_taylor_poly(rng, 1, 2)
        with pytest.raises(InvalidArgumentError):
            shift_derivative(poly, [0.0], 3)


class TestRegDerivative:
    def test_value_is_norm_power(self):
        s = np.array([0.3, -0.4])
        t = reg_derivative_tensor(s, 2, 0)
        assert float(t.entries[0]) == pytest.approx(0.5**3, rel=1e-14)
        assert reg_derivative_norm(s, 2, 0) == pytest.approx(0.5**3, rel=1e-14)

    def test_hand_derivative_1d(self):
        # d/ds |s|^3 = 3 s^2 at s=2 -> 12; formula (3!/2!) * 2^2
        assert reg_derivative_norm([2.0], 2, 1) == pytest.approx(12.0, rel=1e-14)
        t = reg_derivative_tensor([2.0], 2, 1)
        assert float(t.entries[0]) == pytest.approx(12.0, rel=1e-14)
        fd = fd_derivative(lambda d: abs(d[0]) ** 3, np.array([2.0]), 1)
        assert fd[0] == pytest.approx(12.0, rel=1e-8)

    def test_top_order_is_factorial(self):
        for p in (1, 2, 3):
            assert reg_derivative_norm([0.37], p, p + 1) == pytest.approx(
                math.factorial(p + 1), rel=1e-12
            )

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_norm_identity_low_orders(self, n, j, rng):
        for p in (1, 2, 3, 5):
            s = rng.standard_normal(n)
            t = reg_derivative_tensor(s, p, j)
            assert tensor_operator_norm(t) == pytest.approx(
                reg_derivative_norm(s, p, j), rel=1e-10
            )

    def test_norm_identity_high_order_sampled(self, rng):
        # power iteration gives a lower bound that should reach the closed form
        s = rng.standard_normal(2)
        p, j = 3, 3
        t = reg_derivative_tensor(s, p, j)
        est = tensor_operator_norm(t, starts=64, sweeps=100)
        ref = reg_derivative_norm(s, p, j)
        assert est <= ref * (1 + 1e-9)
        assert est >= ref * (1 - 1e-6)

    def test_gradient_matches_fd(self, rng):
        s = rng.standard_normal(3)
        p = 2
        g = reg_derivative_tensor(s, p, 1).to_dense().reshape(-1)
        g_fd = fd_derivative(lambda d: np.linalg.norm(d) ** (p + 1), s, 1)
        assert np.allclose(g, g_fd, rtol=1e-6, atol=1e-8)

    def test_singular_origin(self):
        with pytest.raises(SingularPointError):
            reg_derivative_tensor(np.zeros(2), 2, 2)
        with pytest.raises(SingularPointError):
            reg_derivative_norm(np.zeros(2), 2, 2)
        # orders 0 and 1 stay defined at the origin
        assert reg_derivative_norm(np.zeros(2), 2, 1) == 0.0


class TestSymmetry:
    @given(st.integers(0, 2), st.integers(1, 2), st.integers(2, 3))
    @settings(max_examples=40, deadline=None)
    def test_permuted_reads_agree(self, seed, i, order):
        rng = np.random.default_rng(seed)
        n = 3
        k = len(sorted_multi_indices(n, order))
        t = SymTensor(order, n, rng.standard_normal(k))
        idx = tuple(rng.integers(0, n, order))
        perm = tuple(np.array(idx)[rng.permutation(order)])
        assert t.get(idx) == t.get(perm)

    def test_dense_roundtrip(self, rng):
        t = SymTensor(3, 2, rng.standard_normal(len(sorted_multi_indices(2, 3))))
        dense = t.to_dense()
        assert dense.shape == (2, 2, 2)
        assert dense[0, 1, 1] == dense[1, 0, 1] == dense[1, 1, 0]
        t2 = SymTensor.from_dense(dense)
        assert np.allclose(t2.entries, t.entries)


class TestPolynomialExactness:
    def test_taylor_error_vanishes_for_polynomials(self, rng):
        # a degree-p polynomial is reproduced exactly by its own model
        for _ in range(10):
            poly = random_taylor_poly(rng, 2, 4)
            x_shift = rng.standard_normal(2)
            s = rng.standard_normal(2)
            direct = brute_force_eval(poly, x_shift + s)
            terms = tuple(shift_derivative(poly, x_shift, j) for j in range(poly.degree + 1))
            re_expanded = TaylorPoly(poly.base_point + x_shift, terms)
            model_val = eval_taylor(re_expanded, s)
            assert abs(direct - model_val) <= 1e-10 * (1 + abs(direct))
