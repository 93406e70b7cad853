"""Dense symmetric-tensor arithmetic for low-dimensional Taylor models.

Everything here targets desk scale (dimension <= 3, degree <= 6, plus one
extra order for the regularizer), so tensors are stored densely: one float
per *sorted* multi-index together with the multinomial multiplicity that
accounts for all of its permutations.  All operations are exact coefficient
recombinations; no numeric differentiation happens in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError, SingularPointError

__all__ = [
    "SymTensor",
    "TaylorPoly",
    "VecTaylorPoly",
    "eval_taylor",
    "shift_derivative",
    "reg_derivative_tensor",
    "reg_derivative_norm",
    "tensor_operator_norm",
]


@lru_cache(maxsize=None)
def sorted_multi_indices(dim: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All nondecreasing index tuples of the given length over range(dim)."""
    return tuple(combinations_with_replacement(range(dim), order))


@lru_cache(maxsize=None)
def _index_positions(dim: int, order: int) -> dict[tuple[int, ...], int]:
    return {idx: pos for pos, idx in enumerate(sorted_multi_indices(dim, order))}


@lru_cache(maxsize=None)
def multiplicity(idx: tuple[int, ...]) -> int:
    """Number of distinct permutations of a sorted multi-index."""
    counts: dict[int, int] = {}
    for i in idx:
        counts[i] = counts.get(i, 0) + 1
    m = math.factorial(len(idx))
    for c in counts.values():
        m //= math.factorial(c)
    return m


@lru_cache(maxsize=None)
def _exponent_vectors(dim: int, order: int) -> np.ndarray:
    """Per sorted multi-index, the exponent of each coordinate (dim columns)."""
    idxs = sorted_multi_indices(dim, order)
    out = np.zeros((len(idxs), dim), dtype=np.int64)
    for r, idx in enumerate(idxs):
        for i in idx:
            out[r, i] += 1
    return out


@dataclass(frozen=True)
class SymTensor:
    """Symmetric tensor of a given order over R^dim, stored by sorted multi-index.

    ``entries[k]`` is the value at ``sorted_multi_indices(dim, order)[k]``;
    reading through any permutation of an index tuple returns the same value.
    Order 0 is a scalar, order 1 a vector, order 2 a symmetric matrix.
    """

    order: int
    dim: int
    entries: np.ndarray

    def __post_init__(self):
        if self.order < 0 or self.dim < 1:
            raise InvalidArgumentError("order must be >= 0 and dim >= 1")
        want = len(sorted_multi_indices(self.dim, self.order))
        ent = np.asarray(self.entries, dtype=float).reshape(-1)
        if ent.size != want:
            raise DimensionMismatchError(
                f"expected {want} entries for order {self.order}, dim {self.dim}; got {ent.size}"
            )
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @classmethod
    def zeros(cls, order: int, dim: int) -> "SymTensor":
        return cls(order, dim, np.zeros(len(sorted_multi_indices(dim, order))))

    @classmethod
    def from_dense(cls, arr, dim: int | None = None) -> "SymTensor":
        """Build from a dense ndarray (assumed symmetric; sorted entries are read)."""
        a = np.asarray(arr, dtype=float)
        if a.ndim == 0:
            return cls(0, dim or 1, np.array([float(a)]))
        d = a.shape[0]
        vals = [a[idx] if a.ndim > 0 else float(a) for idx in sorted_multi_indices(d, a.ndim)]
        return cls(a.ndim, d, np.array(vals, dtype=float))

    def get(self, idx: tuple[int, ...]) -> float:
        key = tuple(sorted(idx))
        return float(self.entries[_index_positions(self.dim, self.order)[key]])

    def to_dense(self) -> np.ndarray:
        """Materialize the full symmetric ndarray (tiny at desk scale)."""
        if self.order == 0:
            return np.array(float(self.entries[0]))
        out = np.zeros((self.dim,) * self.order)
        from itertools import permutations, product

        for idx in product(range(self.dim), repeat=self.order):
            out[idx] = self.get(idx)
        return out

    def contract(self, s: np.ndarray, times: int) -> "SymTensor":
        """Contract with `times` copies of s, producing an order-(order-times) tensor."""
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.size != self.dim:
            raise DimensionMismatchError("vector dimension does not match tensor dim")
        if times < 0 or times > self.order:
            raise InvalidArgumentError("contraction count out of range")
        if times == 0:
            return self
        r = self.order - times
        pos = _index_positions(self.dim, self.order)
        out = np.zeros(len(sorted_multi_indices(self.dim, r)))
        for b, beta in enumerate(sorted_multi_indices(self.dim, r)):
            acc = 0.0
            for gamma in sorted_multi_indices(self.dim, times):
                sprod = 1.0
                for g in gamma:
                    sprod *= s[g]
                acc += multiplicity(gamma) * self.entries[pos[tuple(sorted(beta + gamma))]] * sprod
            out[b] = acc
        return SymTensor(r, self.dim, out)

    def apply(self, s: np.ndarray) -> float:
        """Full contraction T[s]^order."""
        return float(self.contract(s, self.order).entries[0])

    def norm(self) -> float:
        return tensor_operator_norm(self)

    def __add__(self, other: "SymTensor") -> "SymTensor":
        if self.order != other.order or self.dim != other.dim:
            raise DimensionMismatchError("tensor shapes differ")
        return SymTensor(self.order, self.dim, self.entries + other.entries)

    def scale(self, a: float) -> "SymTensor":
        return SymTensor(self.order, self.dim, a * self.entries)


def tensor_operator_norm(t: SymTensor, starts: int = 64, sweeps: int = 100, seed: int = 0) -> float:
    """Operator norm; exact for order <= 2, multi-start power-type estimate above.

    The order >= 3 estimate is a diagnostic only (exact tensor norms are
    NP-hard) and is never used in algorithmic control flow.
    """
    if t.order == 0:
        return abs(float(t.entries[0]))
    if t.order == 1:
        return float(np.linalg.norm(t.to_dense()))
    if t.order == 2:
        return float(np.max(np.abs(np.linalg.eigvalsh(t.to_dense()))))
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        v = rng.standard_normal(t.dim)
        v /= np.linalg.norm(v)
        for _ in range(sweeps):
            g = t.contract(v, t.order - 1).to_dense().reshape(-1)
            gn = np.linalg.norm(g)
            if gn < 1e-300:
                break
            v_new = g / gn
            if np.dot(v_new, v) < 0:
                v_new = -v_new
            if np.linalg.norm(v_new - v) < 1e-14:
                v = v_new
                break
            v = v_new
        best = max(best, abs(t.apply(v)))
    return best


def frobenius_bound(t: SymTensor) -> float:
    """Cheap upper bound on the operator norm (used for conservative surrogates)."""
    mults = np.array([multiplicity(i) for i in sorted_multi_indices(t.dim, t.order)], dtype=float)
    return float(np.sqrt(np.sum(mults * t.entries**2)))


@dataclass(frozen=True)
class TaylorPoly:
    """Degree-p Taylor model: terms[l] holds the raw derivative tensor of order l.

    Evaluation at a displacement s returns  sum_l terms[l][s]^l / l! .
    """

    base_point: np.ndarray
    terms: tuple[SymTensor, ...]
    _table: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        bp = np.asarray(self.base_point, dtype=float).reshape(-1)
        bp.setflags(write=False)
        object.__setattr__(self, "base_point", bp)
        object.__setattr__(self, "terms", tuple(self.terms))
        n = bp.size
        for ell, t in enumerate(self.terms):
            if t.order != ell or t.dim != n:
                raise DimensionMismatchError(
                    f"term {ell} must be an order-{ell} tensor over R^{n}"
                )

    @property
    def dim(self) -> int:
        return self.base_point.size

    @property
    def degree(self) -> int:
        return len(self.terms) - 1

    def truncate(self, degree: int) -> "TaylorPoly":
        """Drop terms above `degree`; reuses existing tensors (no new oracle work)."""
        if degree < 0 or degree > self.degree:
            raise InvalidArgumentError("truncation degree out of range")
        return TaylorPoly(self.base_point, self.terms[: degree + 1])

    # -- evaluation ---------------------------------------------------------

    def _monomials(self):
        """Monomial table (exponents, coefficients) of s -> eval(self, s)."""
        tab = self._table.get("mono")
        if tab is None:
            exps, coefs = [], []
            for ell, t in enumerate(self.terms):
                inv = 1.0 / math.factorial(ell)
                evecs = _exponent_vectors(self.dim, ell)
                for r, idx in enumerate(sorted_multi_indices(self.dim, ell)):
                    c = inv * multiplicity(idx) * t.entries[r]
                    if c != 0.0:
                        exps.append(evecs[r])
                        coefs.append(c)
            if exps:
                tab = (np.array(exps, dtype=np.int64), np.array(coefs))
            else:
                tab = (np.zeros((0, self.dim), dtype=np.int64), np.zeros(0))
            self._table["mono"] = tab
        return tab

    def univariate_coeffs(self) -> np.ndarray:
        """Monomial coefficients c with eval(s) = sum_e c[e] s^e (dim 1 only)."""
        if self.dim != 1:
            raise InvalidArgumentError("univariate coefficients need dim 1")
        co = self._table.get("uni")
        if co is None:
            co = np.zeros(self.degree + 1)
            for ell, t in enumerate(self.terms):
                co[ell] = t.entries[0] / math.factorial(ell)
            self._table["uni"] = co
        return co

    def eval(self, s) -> float:
        s = np.asarray(s, dtype=float).reshape(-1)
        if s.size != self.dim:
            raise DimensionMismatchError("displacement dimension mismatch")
        if self.dim == 1:
            co = self.univariate_coeffs()
            acc = 0.0
            for c in co[::-1]:
                acc = acc * s[0] + c
            return float(acc)
        exps, coefs = self._monomials()
        if exps.shape[0] == 0:
            return 0.0
        mono = np.prod(s[None, :] ** exps, axis=1)
        return float(mono @ coefs)

    def eval_batch(self, D: np.ndarray) -> np.ndarray:
        """Evaluate at many displacements; D has shape (M, dim)."""
        D = np.asarray(D, dtype=float)
        if D.ndim == 1:
            D = D[:, None]
        if D.shape[1] != self.dim:
            raise DimensionMismatchError("displacement dimension mismatch")
        if self.dim == 1:
            co = self.univariate_coeffs()
            out = np.zeros(D.shape[0])
            for c in co[::-1]:
                out *= D[:, 0]
                out += c
            return out
        exps, coefs = self._monomials()
        out = np.zeros(D.shape[0])
        if exps.shape[0] == 0:
            return out
        max_e = int(exps.max())
        pows = [None] * self.dim
        for ax in range(self.dim):
            col = D[:, ax]
            p = np.empty((max_e + 1, D.shape[0]))
            p[0] = 1.0
            for e in range(1, max_e + 1):
                p[e] = p[e - 1] * col
            pows[ax] = p
        for r in range(exps.shape[0]):
            term = np.full(D.shape[0], coefs[r])
            for ax in range(self.dim):
                e = exps[r, ax]
                if e:
                    term = term * pows[ax][e]
            out += term
        return out


def eval_taylor(poly: TaylorPoly, s) -> float:
    """Value of the Taylor model at displacement s from its base point."""
    return poly.eval(s)


def shift_derivative(poly: TaylorPoly, s, j: int) -> SymTensor:
    """Exact j-th derivative tensor of s -> eval_taylor(poly, s).

    Computed by coefficient recombination,
        d^j/ds^j  sum_l terms[l][s]^l / l!  =  sum_{l>=j} terms[l][s]^{l-j} / (l-j)!,
    with no truncation and no numeric differentiation.
    """
    if j < 0 or j > poly.degree:
        raise InvalidArgumentError(f"derivative order {j} outside 0..{poly.degree}")
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.size != poly.dim:
        raise DimensionMismatchError("displacement dimension mismatch")
    acc = SymTensor.zeros(j, poly.dim)
    for ell in range(j, poly.degree + 1):
        part = poly.terms[ell].contract(s, ell - j)
        acc = acc + part.scale(1.0 / math.factorial(ell - j))
    return acc


@dataclass(frozen=True)
class VecTaylorPoly:
    """m Taylor models sharing base point and degree (vector-valued expansion)."""

    components: tuple[TaylorPoly, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidArgumentError("need at least one component")
        c0 = comps[0]
        for c in comps[1:]:
            if c.degree != c0.degree or c.dim != c0.dim or not np.array_equal(
                c.base_point, c0.base_point
            ):
                raise DimensionMismatchError("components must share base point and degree")

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def degree(self) -> int:
        return self.components[0].degree

    def truncate(self, degree: int) -> "VecTaylorPoly":
        return VecTaylorPoly(tuple(c.truncate(degree) for c in self.components))

    def eval(self, s) -> np.ndarray:
        return np.array([c.eval(s) for c in self.components])

    def eval_batch(self, D: np.ndarray) -> np.ndarray:
        return np.stack([c.eval_batch(D) for c in self.components], axis=1)


# -- derivatives of the power regularizer ||s||^(p+1) -------------------------


def _matchings(indices: tuple[int, ...]):
    """All ways to split an index tuple into disjoint pairs plus singletons."""
    if not indices:
        yield ((), ())
        return
    first, rest = indices[0], indices[1:]
    # first stays single
    for pairs, singles in _matchings(rest):
        yield (pairs, (first,) + singles)
    # first pairs with a later slot
    for k in range(len(rest)):
        sub = rest[:k] + rest[k + 1 :]
        for pairs, singles in _matchings(sub):
            yield (((first, rest[k]),) + pairs, singles)


def reg_derivative_tensor(s, p: int, j: int) -> SymTensor:
    """The order-j derivative tensor of s -> ||s||^(p+1) (Euclidean norm).

    Smooth away from the origin; requesting j >= 2 at s = 0 is a singular
    point and raises.  Entries follow the closed form obtained by repeatedly
    differentiating (s.s)^((p+1)/2): every way of pairing derivative slots
    contributes a product of Kronecker deltas, leftover copies of s, and a
    falling product of the exponent.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    n = s.size
    a = p + 1
    if j < 0 or j > p + 1:
        raise InvalidArgumentError(f"derivative order {j} outside 0..{p + 1}")
    nrm = float(np.linalg.norm(s))
    if nrm == 0.0:
        if j >= 2:
            raise SingularPointError("||s||^(p+1) is not twice differentiable at s = 0")
        if j == 0:
            return SymTensor(0, n, np.array([0.0]))
        return SymTensor.zeros(1, n)  # a >= 2, so the gradient vanishes at 0
    if j == 0:
        return SymTensor(0, n, np.array([nrm**a]))
    slots = tuple(range(j))
    entries = np.zeros(len(sorted_multi_indices(n, j)))
    for r, idx in enumerate(sorted_multi_indices(n, j)):
        total = 0.0
        for pairs, singles in _matchings(slots):
            ok = all(idx[alpha] == idx[beta] for alpha, beta in pairs)
            if not ok:
                continue
            t = len(pairs)
            coef = 1.0
            for m_ in range(j - t):
                coef *= a - 2 * m_
            if coef == 0.0:
                continue
            term = coef * nrm ** (a - 2 * (j - t))
            for g in singles:
                term *= s[idx[g]]
            total += term
        entries[r] = total
    return SymTensor(j, n, entries)


def reg_derivative_norm(s, p: int, j: int) -> float:
    """Operator norm of the order-j derivative of ||s||^(p+1):
    (p+1)!/(p-j+1)! * ||s||^(p-j+1)."""
    s = np.asarray(s, dtype=float).reshape(-1)
    if j < 0 or j > p + 1:
        raise InvalidArgumentError(f"derivative order {j} outside 0..{p + 1}")
    nrm = float(np.linalg.norm(s))
    if nrm == 0.0 and j >= 2:
        raise SingularPointError("||s||^(p+1) is not twice differentiable at s = 0")
    return math.factorial(p + 1) / math.factorial(p - j + 1) * nrm ** (p - j + 1)
