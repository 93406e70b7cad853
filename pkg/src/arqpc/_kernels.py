"""Hot replay kernels: node-mode verification loops over up to ~2^24 iterations.

The worst-case replays must reproduce iteration counts exactly under a tight
runtime budget, so the per-iteration arithmetic lives here in two equivalent
backends: a numba-compiled scalar loop (default when numba imports) and a
chunked pure-numpy path.  Select with ARQPC_BACKEND=numba|numpy.

Per iteration the loops evaluate the strong termination test in closed form
(the node models are monomials, so the ball minimum is explicit and the
comparison at the terminal iterate is bit-exact), advance the node recurrence,
and check the success ratio and the model-decrease identity.  Heavier
redundant identities (designated step global optimality, descent, positivity
of the inner function) run on a strided sample plus the endpoints.

Status codes: 0 ok, 1 early termination, 2 missing termination, 3 model
identity broke, 4 descent broke, 5 inner positivity broke, 6 unsuccessful
iteration, 7 node value left its bracket.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAVE_NUMBA = False

    def njit(*a, **k):  # type: ignore
        def deco(f):
            return f

        return deco(a[0]) if a and callable(a[0]) else deco


def backend() -> str:
    """Selected kernel backend: ARQPC_BACKEND env var, else numba when present."""
    env = os.environ.get("ARQPC_BACKEND", "").strip().lower()
    if env in ("numba", "numpy"):
        if env == "numba" and not HAVE_NUMBA:
            raise RuntimeError("ARQPC_BACKEND=numba requested but numba is unavailable")
        return env
    return "numba" if HAVE_NUMBA else "numpy"


# -- scalar loops (numba-compiled when available) ------------------------------


def _loop_monomial(k_eps, eps, inv_kind, inv_exp, zeta, fq, fp1, sigma, f0_init,
                   eta1, stride, composite, q, p):
    """Replay loop for instances whose node model is a single monomial of
    order q with coefficient -(eps + omega_k) (plus the same data read as the
    inner function of a composite absolute-value wrapper).

    The designated step is coef^(1/(p-q+1)); raising it back by integer
    multiplication yields the decrement's power coef^((p+1)/(p-q+1)), keeping
    the hot loop to at most one root per iteration (none when the inverse
    exponent is 1, a sqrt chain when it is a power of one half).
    """
    f0 = f0_init
    x = 0.0
    n_success = 0
    max_rho_err = 0.0
    min_rt = 1.0e300
    max_rt = -1.0e300
    for k in range(k_eps + 1):
        omega = eps * ((k_eps - k) / k_eps)
        A = eps + omega
        if A <= eps:  # strong test passes exactly when omega == 0
            if k != k_eps:
                return (1, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
            return (0, -1, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if k == k_eps:
            return (2, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if inv_kind == 1:
            s = A
        elif inv_kind == 2:
            s = math.sqrt(A)
        elif inv_kind == 3:
            s = math.sqrt(math.sqrt(A))
        else:
            s = A**inv_exp
        powA = s
        for _ in range(p):
            powA *= s
        taylor_dec = powA / fq
        dec = zeta * powA
        f_next = f0 - dec
        w_diff = f0 - f_next
        rt = w_diff / taylor_dec
        if rt < eta1:
            return (6, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if rt < min_rt:
            min_rt = rt
        if rt > max_rt:
            max_rt = rt
        err = abs(w_diff / dec - 1.0)
        if err > max_rho_err:
            max_rho_err = err
        if f_next <= 0.0:
            return (7, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if (k % stride) == 0 or k + 2 >= k_eps or k <= 2:
            z = 1.0
            for _ in range(q):
                z *= s
            model_dec = A * z / fq - sigma * powA / fp1
            if not model_dec > 0.0:
                return (4, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
            if abs(model_dec - dec) > 1e-9 * dec:
                return (3, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
            if composite and f0 - A * s < 0.0:
                return (5, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        n_success += 1
        f0 = f_next
        x += s
    return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)


def _loop_linear(k_eps, eps, q, p, fq, thr_low, f0_init, eta1, stride):
    """Replay loop for instances whose node model is linear with slope
    -(eps^q + omega_k)/q! and optimality radii equal to eps at every order."""
    f0 = f0_init
    x = 0.0
    n_success = 0
    max_rho_err = 0.0
    min_rt = 1.0e300
    max_rt = -1.0e300
    epsq = eps**q
    thr_q = ((epsq + 0.0) / fq) * eps
    inv_p = 1.0 / p
    dec_fac = p / (p + 1.0)
    for k in range(k_eps + 1):
        omq = epsq * ((k_eps - k) / k_eps)
        A = (epsq + omq) / fq
        phi = A * eps
        if phi <= thr_q and phi <= thr_low:
            if k != k_eps:
                return (1, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
            return (0, -1, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if k == k_eps:
            return (2, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if p == 1:
            s = A
        elif p == 2:
            s = math.sqrt(A)
        elif p == 4:
            s = math.sqrt(math.sqrt(A))
        else:
            s = A**inv_p
        powA = s
        for _ in range(p):
            powA *= s
        taylor_dec = powA
        dec = dec_fac * powA
        f_next = f0 - dec
        w_diff = f0 - f_next
        rt = w_diff / taylor_dec
        if rt < eta1:
            return (6, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if rt < min_rt:
            min_rt = rt
        if rt > max_rt:
            max_rt = rt
        err = abs(w_diff / dec - 1.0)
        if err > max_rho_err:
            max_rho_err = err
        if f_next < 0.0:
            return (7, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if (k % stride) == 0 or k + 2 >= k_eps or k <= 2:
            model_dec = A * s - powA / (p + 1.0)
            if not model_dec > 0.0:
                return (4, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
            if abs(model_dec - dec) > 1e-9 * dec:
                return (3, k, n_success, max_rho_err, min_rt, max_rt, x, f0)
        n_success += 1
        f0 = f_next
        x += s
    return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)


if HAVE_NUMBA:
    _loop_monomial_nb = njit(cache=True)(_loop_monomial)
    _loop_linear_nb = njit(cache=True)(_loop_linear)


# -- chunked numpy fallbacks ----------------------------------------------------

_CHUNK = 1 << 20


def _root_arr(A: np.ndarray, inv_kind: int, inv_exp: float) -> np.ndarray:
    if inv_kind == 1:
        return A
    if inv_kind == 2:
        return np.sqrt(A)
    if inv_kind == 3:
        return np.sqrt(np.sqrt(A))
    return A**inv_exp


def _np_monomial(k_eps, eps, inv_kind, inv_exp, zeta, fq, fp1, sigma, f0_init,
                 eta1, stride, composite, q, p):
    f0 = f0_init
    x = 0.0
    n_success = 0
    max_rho_err = 0.0
    min_rt = 1.0e300
    max_rt = -1.0e300
    for lo in range(0, k_eps + 1, _CHUNK):
        hi = min(lo + _CHUNK, k_eps + 1)
        ks = np.arange(lo, hi, dtype=np.int64)
        omega = eps * ((k_eps - ks) / k_eps)
        A = eps + omega
        passing = A <= eps
        stop = int(np.argmax(passing)) if passing.any() else -1
        limit = hi - lo if stop < 0 else stop
        if stop >= 0 and lo + stop != k_eps:
            return (1, lo + stop, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if stop < 0 and hi == k_eps + 1:
            return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if limit > 0:
            Ak = A[:limit]
            s = _root_arr(Ak, inv_kind, inv_exp)
            powA = s ** (p + 1)
            taylor_dec = powA / fq
            dec = zeta * powA
            csum = np.cumsum(dec)
            f_next = f0 - csum
            f_prev = f0 - (csum - dec)
            w_diff = f_prev - f_next
            rt = w_diff / taylor_dec
            bad = rt < eta1
            if bad.any():
                kk = int(np.argmax(bad))
                return (6, lo + kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            min_rt = min(min_rt, float(rt.min()))
            max_rt = max(max_rt, float(rt.max()))
            max_rho_err = max(max_rho_err, float(np.max(np.abs(w_diff / dec - 1.0))))
            neg = f_next <= 0.0
            if neg.any():
                kk = int(np.argmax(neg))
                return (7, lo + kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            sel = ((ks[:limit] % stride) == 0) | (ks[:limit] + 2 >= k_eps) | (ks[:limit] <= 2)
            As, ss, decs = Ak[sel], s[sel], dec[sel]
            if As.size:
                z = ss**q
                u = powA[sel]
                model_dec = As * z / fq - sigma * u / fp1
                if not np.all(model_dec > 0.0):
                    kk = int(ks[:limit][sel][int(np.argmax(~(model_dec > 0.0)))])
                    return (4, kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
                bad = np.abs(model_dec - decs) > 1e-9 * decs
                if bad.any():
                    kk = int(ks[:limit][sel][int(np.argmax(bad))])
                    return (3, kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
                if composite:
                    fprevs = f_prev[sel]
                    bad = fprevs - As * ss < 0.0
                    if bad.any():
                        kk = int(ks[:limit][sel][int(np.argmax(bad))])
                        return (5, kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            n_success += limit
            f0 = float(f_next[-1])
            x += float(np.sum(s))
        if stop >= 0:
            return (0, -1, n_success, max_rho_err, min_rt, max_rt, x, f0)
    return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)


def _np_linear(k_eps, eps, q, p, fq, thr_low, f0_init, eta1, stride):
    f0 = f0_init
    x = 0.0
    n_success = 0
    max_rho_err = 0.0
    min_rt = 1.0e300
    max_rt = -1.0e300
    epsq = eps**q
    thr_q = ((epsq + 0.0) / fq) * eps
    inv_p = 1.0 / p
    root_kind = {1: 1, 2: 2, 4: 3}.get(int(p), 0)
    dec_fac = p / (p + 1.0)
    for lo in range(0, k_eps + 1, _CHUNK):
        hi = min(lo + _CHUNK, k_eps + 1)
        ks = np.arange(lo, hi, dtype=np.int64)
        omq = epsq * ((k_eps - ks) / k_eps)
        A = (epsq + omq) / fq
        phi = A * eps
        passing = (phi <= thr_q) & (phi <= thr_low)
        stop = int(np.argmax(passing)) if passing.any() else -1
        limit = hi - lo if stop < 0 else stop
        if stop >= 0 and lo + stop != k_eps:
            return (1, lo + stop, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if stop < 0 and hi == k_eps + 1:
            return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)
        if limit > 0:
            Ak = A[:limit]
            s = _root_arr(Ak, root_kind, inv_p)
            powA = s ** (p + 1)
            dec = dec_fac * powA
            csum = np.cumsum(dec)
            f_next = f0 - csum
            f_prev = f0 - (csum - dec)
            w_diff = f_prev - f_next
            rt = w_diff / powA
            bad = rt < eta1
            if bad.any():
                kk = int(np.argmax(bad))
                return (6, lo + kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            min_rt = min(min_rt, float(rt.min()))
            max_rt = max(max_rt, float(rt.max()))
            max_rho_err = max(max_rho_err, float(np.max(np.abs(w_diff / dec - 1.0))))
            neg = f_next < 0.0
            if neg.any():
                kk = int(np.argmax(neg))
                return (7, lo + kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            sel = ((ks[:limit] % stride) == 0) | (ks[:limit] + 2 >= k_eps) | (ks[:limit] <= 2)
            As, ss, decs = Ak[sel], s[sel], dec[sel]
            if As.size:
                u = powA[sel]
                model_dec = As * ss - u / (p + 1.0)
                if not np.all(model_dec > 0.0):
                    kk = int(ks[:limit][sel][int(np.argmax(~(model_dec > 0.0)))])
                    return (4, kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
                bad = np.abs(model_dec - decs) > 1e-9 * decs
                if bad.any():
                    kk = int(ks[:limit][sel][int(np.argmax(bad))])
                    return (3, kk, n_success, max_rho_err, min_rt, max_rt, x, f0)
            n_success += limit
            f0 = float(f_next[-1])
            x += float(np.sum(s))
        if stop >= 0:
            return (0, -1, n_success, max_rho_err, min_rt, max_rt, x, f0)
    return (2, k_eps, n_success, max_rho_err, min_rt, max_rt, x, f0)


def replay_monomial(k_eps, eps, inv_exp, zeta, fq, fp1, sigma, f0_init,
                    eta1, stride, composite, q, p, *, force_backend: str | None = None):
    be = force_backend or backend()
    inv_kind = {1.0: 1, 0.5: 2, 0.25: 3}.get(float(inv_exp), 0)
    fn = _loop_monomial_nb if (be == "numba" and HAVE_NUMBA) else _np_monomial
    return fn(
        np.int64(k_eps), float(eps), np.int64(inv_kind), float(inv_exp), float(zeta),
        float(fq), float(fp1), float(sigma), float(f0_init), float(eta1),
        np.int64(stride), bool(composite), np.int64(q), np.int64(p),
    )


def replay_linear(k_eps, eps, q, p, fq, thr_low, f0_init, eta1, stride,
                  *, force_backend: str | None = None):
    be = force_backend or backend()
    fn = _loop_linear_nb if (be == "numba" and HAVE_NUMBA) else _np_linear
    return fn(
        np.int64(k_eps), float(eps), np.int64(q), np.int64(p), float(fq),
        float(thr_low), float(f0_init), float(eta1), np.int64(stride),
    )
