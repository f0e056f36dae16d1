"""Negacyclic number-theoretic transforms over NTT-friendly primes.

Polynomials live in Z_q[x]/(x^n + 1) with n a power of two and q = 1 mod 2n.
The forward transform evaluates at odd powers of a primitive 2n-th root psi,
so pointwise products correspond to negacyclic convolution. Transforms use
the standard iterative butterflies with bit-reversed twiddle tables.

Two implementations are provided and selected per call through
fedshield.backend: numba-jitted kernels using Montgomery multiplication
(64x64 products via 32-bit limb splitting), and pure-numpy fallbacks on
object-dtype arrays (exact big-int arithmetic). Outputs are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..backend import HAS_NUMBA, active_backend

_R64 = 1 << 64

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24 (covers all u64)."""
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def find_ntt_prime(bits: int, two_n: int, exclude=()) -> int:
    """Largest prime q < 2^bits with q = 1 mod two_n, exact bit length."""
    q = (1 << bits) - 1
    q -= (q - 1) % two_n
    lo = 1 << (bits - 1)
    excluded = set(exclude)
    while q > lo:
        if q not in excluded and is_prime(q):
            return q
        q -= two_n
    raise ValueError(f"no {bits}-bit prime = 1 mod {two_n}")


def find_primitive_root(q: int, two_n: int) -> int:
    """Smallest-generator primitive 2n-th root of unity mod q.

    Since two_n is a power of two, psi^n == -1 characterizes full order.
    """
    n = two_n // 2
    exp = (q - 1) // two_n
    for g in range(2, 10_000):
        psi = pow(g, exp, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError(f"no primitive {two_n}-th root found mod {q}")


def _bit_reverse(x: int, bits: int) -> int:
    r = 0
    for _ in range(bits):
        r = (r << 1) | (x & 1)
        x >>= 1
    return r


@dataclass(frozen=True)
class NttPlan:
    """Precomputed tables for one (prime, degree) pair."""

    q: int
    n: int
    psi: int
    # numba path: bit-reversed twiddles in Montgomery form (x * 2^64 mod q)
    psis_mont: np.ndarray
    ipsis_mont: np.ndarray
    n_inv_mont: int
    qinv: int  # -q^-1 mod 2^64
    r2: int    # 2^128 mod q
    # numpy path: the same twiddles as plain ints (object dtype)
    psis_plain: np.ndarray
    ipsis_plain: np.ndarray
    n_inv: int


_PLAN_CACHE: dict[tuple[int, int], NttPlan] = {}


def get_plan(q: int, n: int) -> NttPlan:
    key = (q, n)
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        plan = _build_plan(q, n)
        _PLAN_CACHE[key] = plan
    return plan


def _build_plan(q: int, n: int) -> NttPlan:
    if n & (n - 1) or n < 2:
        raise ValueError(f"degree must be a power of two, got {n}")
    if (q - 1) % (2 * n):
        raise ValueError(f"{q} is not NTT-friendly for degree {n}")
    if q >= 1 << 62:
        raise ValueError("primes above 62 bits overflow the butterfly adds")
    psi = find_primitive_root(q, 2 * n)
    ipsi = pow(psi, -1, q)
    bits = n.bit_length() - 1
    order = [_bit_reverse(i, bits) for i in range(n)]
    psis = [pow(psi, e, q) for e in order]
    ipsis = [pow(ipsi, e, q) for e in order]
    n_inv = pow(n, -1, q)
    return NttPlan(
        q=q,
        n=n,
        psi=psi,
        psis_mont=np.array([x * _R64 % q for x in psis], dtype=np.uint64),
        ipsis_mont=np.array([x * _R64 % q for x in ipsis], dtype=np.uint64),
        n_inv_mont=n_inv * _R64 % q,
        qinv=(-pow(q, -1, _R64)) % _R64,
        r2=_R64 * _R64 % q,
        psis_plain=np.array(psis, dtype=object),
        ipsis_plain=np.array(ipsis, dtype=object),
        n_inv=n_inv,
    )


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if HAS_NUMBA:
    import numba

    @numba.njit(numba.uint64(numba.uint64, numba.uint64), cache=True,
                inline="always")
    def _mulhi(a, b):
        """High 64 bits of a*b via 32-bit limbs."""
        alo = a & numba.uint64(0xFFFFFFFF)
        ahi = a >> numba.uint64(32)
        blo = b & numba.uint64(0xFFFFFFFF)
        bhi = b >> numba.uint64(32)
        p0 = alo * blo
        p1 = alo * bhi
        p2 = ahi * blo
        p3 = ahi * bhi
        carry = ((p0 >> numba.uint64(32))
                 + (p1 & numba.uint64(0xFFFFFFFF))
                 + (p2 & numba.uint64(0xFFFFFFFF))) >> numba.uint64(32)
        return p3 + (p1 >> numba.uint64(32)) + (p2 >> numba.uint64(32)) + carry

    @numba.njit(
        numba.uint64(numba.uint64, numba.uint64, numba.uint64, numba.uint64),
        cache=True, inline="always")
    def _mont_mul(a, b_mont, q, qinv):
        """a (plain) times b (Montgomery form) mod q; result plain."""
        lo = a * b_mont
        hi = _mulhi(a, b_mont)
        m = lo * qinv
        t = hi + _mulhi(m, q)
        if lo != numba.uint64(0):
            t += numba.uint64(1)
        if t >= q:
            t -= q
        return t

    @numba.njit(cache=True)
    def _ntt_fwd_nb(a, psis_mont, q, qinv):
        n = a.shape[0]
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                s = psis_mont[m + i]
                j1 = 2 * i * t
                for j in range(j1, j1 + t):
                    u = a[j]
                    v = _mont_mul(a[j + t], s, q, qinv)
                    a[j] = u + v if u + v < q else u + v - q
                    a[j + t] = u - v if u >= v else u + q - v
            m <<= 1

    @numba.njit(cache=True)
    def _ntt_inv_nb(a, ipsis_mont, q, qinv, n_inv_mont):
        n = a.shape[0]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            j1 = 0
            for i in range(h):
                s = ipsis_mont[h + i]
                for j in range(j1, j1 + t):
                    u = a[j]
                    v = a[j + t]
                    a[j] = u + v if u + v < q else u + v - q
                    w = u - v if u >= v else u + q - v
                    a[j + t] = _mont_mul(w, s, q, qinv)
                j1 += 2 * t
            t <<= 1
            m = h
        for j in range(n):
            a[j] = _mont_mul(a[j], n_inv_mont, q, qinv)

    @numba.njit(cache=True)
    def _pointwise_mul_nb(a, b, out, q, qinv, r2):
        for i in range(a.shape[0]):
            t = _mont_mul(a[i], b[i], q, qinv)
            out[i] = _mont_mul(t, r2, q, qinv)

    @numba.njit(cache=True)
    def _scalar_mul_nb(a, s_mont, out, q, qinv):
        for i in range(a.shape[0]):
            out[i] = _mont_mul(a[i], s_mont, q, qinv)


# ---------------------------------------------------------------------------
# pure-numpy fallbacks (object dtype, exact)
# ---------------------------------------------------------------------------

def _ntt_fwd_np(a: np.ndarray, psis_plain: np.ndarray, q: int) -> np.ndarray:
    work = a.astype(object)
    n = work.shape[0]
    t = n
    m = 1
    while m < n:
        t >>= 1
        view = work.reshape(m, 2, t)
        s = psis_plain[m:2 * m, None]
        u = view[:, 0, :].copy()
        v = (view[:, 1, :] * s) % q
        view[:, 0, :] = (u + v) % q
        view[:, 1, :] = (u - v) % q
        m <<= 1
    return work.astype(np.uint64)


def _ntt_inv_np(a: np.ndarray, ipsis_plain: np.ndarray, q: int,
                n_inv: int) -> np.ndarray:
    work = a.astype(object)
    n = work.shape[0]
    t = 1
    m = n
    while m > 1:
        h = m >> 1
        view = work.reshape(h, 2, t)
        s = ipsis_plain[h:2 * h, None]
        u = view[:, 0, :].copy()
        v = view[:, 1, :].copy()
        view[:, 0, :] = (u + v) % q
        view[:, 1, :] = ((u - v) * s) % q
        t <<= 1
        m = h
    work = (work * n_inv) % q
    return work.astype(np.uint64)


# ---------------------------------------------------------------------------
# dispatching public API (all pure: inputs are not mutated)
# ---------------------------------------------------------------------------

def ntt_forward(a: np.ndarray, plan: NttPlan) -> np.ndarray:
    """Negacyclic NTT of a length-n residue vector (bit-reversed output)."""
    if active_backend() == "numba":
        work = a.astype(np.uint64, copy=True)
        _ntt_fwd_nb(work, plan.psis_mont, np.uint64(plan.q),
                    np.uint64(plan.qinv))
        return work
    return _ntt_fwd_np(a, plan.psis_plain, plan.q)


def ntt_inverse(a: np.ndarray, plan: NttPlan) -> np.ndarray:
    """Inverse of ntt_forward; exact roundtrip."""
    if active_backend() == "numba":
        work = a.astype(np.uint64, copy=True)
        _ntt_inv_nb(work, plan.ipsis_mont, np.uint64(plan.q),
                    np.uint64(plan.qinv), np.uint64(plan.n_inv_mont))
        return work
    return _ntt_inv_np(a, plan.ipsis_plain, plan.q, plan.n_inv)


def pointwise_mul(a: np.ndarray, b: np.ndarray, plan: NttPlan) -> np.ndarray:
    """Elementwise a*b mod q."""
    if active_backend() == "numba":
        out = np.empty_like(a)
        _pointwise_mul_nb(a, b, out, np.uint64(plan.q), np.uint64(plan.qinv),
                          np.uint64(plan.r2))
        return out
    return ((a.astype(object) * b.astype(object)) % plan.q).astype(np.uint64)


def scalar_mul(a: np.ndarray, s: int, plan: NttPlan) -> np.ndarray:
    """Elementwise a*s mod q for a plain integer s in [0, q)."""
    s = s % plan.q
    if active_backend() == "numba":
        out = np.empty_like(a)
        _scalar_mul_nb(a, np.uint64(s * _R64 % plan.q), out,
                       np.uint64(plan.q), np.uint64(plan.qinv))
        return out
    return ((a.astype(object) * s) % plan.q).astype(np.uint64)


def add_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Elementwise a+b mod q in uint64 (no overflow for q < 2^62)."""
    return (a + b) % np.uint64(q)


def sub_mod(a: np.ndarray, b: np.ndarray, q: int) -> np.ndarray:
    """Elementwise a-b mod q in uint64."""
    return (a + (np.uint64(q) - b)) % np.uint64(q)


def neg_mod(a: np.ndarray, q: int) -> np.ndarray:
    """Elementwise -a mod q in uint64."""
    return (np.uint64(q) - a) % np.uint64(q)
