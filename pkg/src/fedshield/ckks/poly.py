"""RNS polynomial arithmetic on (moduli, degree) uint64 stacks.

A ring element at level L is stored as an (L+1, n) uint64 array, row j holding
the residues mod primes[j]. Rows are kept in the NTT (evaluation) domain for
keys, ciphertexts and plaintexts; conversion helpers work row by row.
"""
from __future__ import annotations

import numpy as np

from .ntt import (
    add_mod,
    get_plan,
    neg_mod,
    ntt_forward,
    ntt_inverse,
    pointwise_mul,
    scalar_mul,
    sub_mod,
)
from .params import CkksParams


def _primes(params: CkksParams, level: int) -> tuple[int, ...]:
    return params.primes[: level + 1]


def rns_ntt(mat: np.ndarray, params: CkksParams, level: int) -> np.ndarray:
    out = np.empty_like(mat)
    for j, q in enumerate(_primes(params, level)):
        out[j] = ntt_forward(mat[j], get_plan(q, params.poly_degree))
    return out


def rns_intt(mat: np.ndarray, params: CkksParams, level: int) -> np.ndarray:
    out = np.empty_like(mat)
    for j, q in enumerate(_primes(params, level)):
        out[j] = ntt_inverse(mat[j], get_plan(q, params.poly_degree))
    return out


def rns_add(a: np.ndarray, b: np.ndarray, params: CkksParams,
            level: int) -> np.ndarray:
    out = np.empty_like(a)
    for j, q in enumerate(_primes(params, level)):
        out[j] = add_mod(a[j], b[j], q)
    return out


def rns_sub(a: np.ndarray, b: np.ndarray, params: CkksParams,
            level: int) -> np.ndarray:
    out = np.empty_like(a)
    for j, q in enumerate(_primes(params, level)):
        out[j] = sub_mod(a[j], b[j], q)
    return out


def rns_neg(a: np.ndarray, params: CkksParams, level: int) -> np.ndarray:
    out = np.empty_like(a)
    for j, q in enumerate(_primes(params, level)):
        out[j] = neg_mod(a[j], q)
    return out


def rns_pointwise_mul(a: np.ndarray, b: np.ndarray, params: CkksParams,
                      level: int) -> np.ndarray:
    out = np.empty_like(a)
    for j, q in enumerate(_primes(params, level)):
        out[j] = pointwise_mul(a[j], b[j], get_plan(q, params.poly_degree))
    return out


def rns_scalar_mul(a: np.ndarray, s: int, params: CkksParams,
                   level: int) -> np.ndarray:
    """Multiply every residue row by the integer s (may be negative)."""
    out = np.empty_like(a)
    for j, q in enumerate(_primes(params, level)):
        out[j] = scalar_mul(a[j], s % q, get_plan(q, params.poly_degree))
    return out


# ---------------------------------------------------------------------------
# sampling and lifting
# ---------------------------------------------------------------------------

def sample_uniform_ntt(params: CkksParams, level: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Uniform ring element, sampled directly in the NTT domain.

    Independent uniform residues per prime are CRT-equivalent to a uniform
    draw mod the full product, and the NTT is a bijection, so this is a
    uniform ring element in either domain.
    """
    n = params.poly_degree
    rows = [rng.integers(0, q, n, dtype=np.uint64)
            for q in _primes(params, level)]
    return np.stack(rows)


def sample_ternary(params: CkksParams, rng: np.random.Generator) -> np.ndarray:
    """Signed ternary coefficients in {-1, 0, 1}, int64."""
    return rng.integers(-1, 2, params.poly_degree, dtype=np.int64)


def sample_gaussian(params: CkksParams, rng: np.random.Generator) -> np.ndarray:
    """Discrete Gaussian coefficients: rounded N(0, noise_stddev^2), int64."""
    return np.rint(rng.normal(0.0, params.noise_stddev,
                              params.poly_degree)).astype(np.int64)


def small_to_rns(coeffs: np.ndarray, params: CkksParams,
                 level: int) -> np.ndarray:
    """Lift small signed int64 coefficients into RNS rows (coefficient domain)."""
    rows = []
    for q in _primes(params, level):
        rows.append(np.mod(coeffs, q).astype(np.uint64))
    return np.stack(rows)


def small_to_rns_ntt(coeffs: np.ndarray, params: CkksParams,
                     level: int) -> np.ndarray:
    return rns_ntt(small_to_rns(coeffs, params, level), params, level)


def ints_to_rns(coeffs: np.ndarray, params: CkksParams,
                level: int) -> np.ndarray:
    """Lift arbitrary-magnitude signed Python ints (object array) into RNS."""
    rows = []
    for q in _primes(params, level):
        rows.append((coeffs % q).astype(np.uint64))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# CRT reconstruction and rescaling
# ---------------------------------------------------------------------------

def crt_centered(mat: np.ndarray, params: CkksParams,
                 level: int) -> np.ndarray:
    """Exact centered representatives in (-Q/2, Q/2] as an object array.

    Input rows must be in the coefficient domain.
    """
    primes = _primes(params, level)
    big_q = 1
    for q in primes:
        big_q *= q
    acc = np.zeros(mat.shape[1], dtype=object)
    for j, q in enumerate(primes):
        m_j = big_q // q
        t_j = pow(m_j % q, -1, q)
        term = (mat[j].astype(object) * t_j) % q
        acc = (acc + term * m_j) % big_q
    return np.where(acc > big_q // 2, acc - big_q, acc)


def rns_rescale(mat_ntt: np.ndarray, params: CkksParams,
                level: int) -> np.ndarray:
    """Divide by the top active prime with rounding; drops one RNS row.

    Computes (x - [x]_{q_L}) / q_L per remaining modulus, where [x]_{q_L} is
    the centered remainder, i.e. round-to-nearest division. Input and output
    rows are in the NTT domain.
    """
    q_top = params.primes[level]
    n = params.poly_degree
    top_coeffs = ntt_inverse(mat_ntt[level], get_plan(q_top, n))
    centered = top_coeffs.astype(np.int64)
    centered[centered > q_top // 2] -= q_top
    out = np.empty((level, n), dtype=np.uint64)
    for j in range(level):
        q_j = params.primes[j]
        plan_j = get_plan(q_j, n)
        lift = ntt_forward(np.mod(centered, q_j).astype(np.uint64), plan_j)
        diff = sub_mod(mat_ntt[j], lift, q_j)
        out[j] = scalar_mul(diff, pow(q_top % q_j, -1, q_j), plan_j)
    return out
