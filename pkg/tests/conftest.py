"""Shared oracles and generators for the test suite.

The oracles here are deliberately independent of the library's evaluation
paths: brute-force full-index tensor loops, central finite differences, dense
scans, and exact integer arithmetic for the worst-case iteration counts.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest

from arqpc.tensors import SymTensor, TaylorPoly


def brute_force_eval(poly: TaylorPoly, s: np.ndarray) -> float:
    """Naive full-index-loop evaluation of sum_l (1/l!) T_l[s]^l."""
    s = np.asarray(s, dtype=float).reshape(-1)
    total = 0.0
    for ell, t in enumerate(poly.terms):
        if ell == 0:
            total += float(t.entries[0])
            continue
        acc = 0.0
        for idx in product(range(poly.dim), repeat=ell):
            v = t.get(idx)
            for i in idx:
                v *= s[i]
            acc += v
        total += acc / math.factorial(ell)
    return total


def fd_derivative(fun, s: np.ndarray, j: int, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, order j in {1, 2}."""
    s = np.asarray(s, dtype=float).reshape(-1)
    n = s.size
    if j == 1:
        g = np.zeros(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            g[i] = (fun(s + e) - fun(s - e)) / (2 * h)
        return g
    if j == 2:
        H = np.zeros((n, n))
        for i in range(n):
            for k in range(n):
                ei = np.zeros(n)
                ek = np.zeros(n)
                ei[i] = h
                ek[k] = h
                H[i, k] = (
                    fun(s + ei + ek) - fun(s + ei - ek) - fun(s - ei + ek) + fun(s - ei - ek)
                ) / (4 * h * h)
        return H
    raise ValueError("finite differences implemented for orders 1 and 2")


def dense_scan_min_1d(fun_batch, delta: float, points: int = 1_000_000) -> tuple[float, float]:
    """Brute-force scan of a univariate objective over [-delta, delta]."""
    ts = np.linspace(-delta, delta, points)
    vals = fun_batch(ts[:, None])
    k = int(np.argmin(vals))
    return float(ts[k]), float(vals[k])


def random_taylor_poly(rng: np.random.Generator, n: int, degree: int,
                       scale: float = 1.0) -> TaylorPoly:
    """Random polynomial model with symmetric tensors at a random base point."""
    from arqpc.tensors import sorted_multi_indices

    terms = []
    for ell in range(degree + 1):
        k = len(sorted_multi_indices(n, ell))
        terms.append(SymTensor(ell, n, scale * rng.standard_normal(k)))
    return TaylorPoly(rng.standard_normal(n), tuple(terms))


def exact_keps_dyadic(e: int, num: int, den: int) -> int:
    """ceil((2^-e)^(-num/den)) = ceil(2^(e*num/den)) in exact integer arithmetic."""
    a = Fraction(e * num, den)
    if a.denominator == 1:
        return 2 ** int(a)
    # smallest K with K^b >= 2^a_int  where the exponent is a_num/b
    a_num, b = a.numerator, a.denominator
    target = 2**a_num
    k = int(round(2.0 ** (float(a_num) / b)))
    while k**b < target:
        k += 1
    while k >= 1 and (k - 1) ** b >= target:
        k -= 1
    return k


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
