"""Ciphertext operations: encrypt, decrypt, add, plaintext-scalar multiply.

The aggregation protocol needs nothing else, so there is no relinearization,
rotation, or ciphertext-ciphertext multiply. All operations are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DepthExhaustedError, StateError
from .encode import Plaintext
from .keys import PublicKey, SecretKey
from .params import CkksParams
from .poly import (
    rns_add,
    rns_pointwise_mul,
    rns_rescale,
    rns_scalar_mul,
    sample_gaussian,
    sample_ternary,
    small_to_rns_ntt,
)

# relative scale mismatch tolerated by add()
_SCALE_RTOL = 2.0 ** -10


@dataclass(frozen=True)
class Ciphertext:
    c0: np.ndarray  # (level+1, n) uint64, NTT domain
    c1: np.ndarray
    scale: float
    level: int
    params: CkksParams

    @property
    def slot_count(self) -> int:
        return self.params.slot_count


def encrypt(pt: Plaintext, pk: PublicKey, seed: int) -> Ciphertext:
    """Public-key encryption: c0 = b*u + e1 + m, c1 = a*u + e2.

    Randomness is drawn from a per-call seed so parallel encryption of many
    chunks stays deterministic.
    """
    params = pt.params
    if params is not pk.params and params != pk.params:
        raise StateError("plaintext and key parameter sets differ")
    lvl = pt.level
    rows = lvl + 1
    rng = np.random.default_rng(seed)
    u_ntt = small_to_rns_ntt(sample_ternary(params, rng), params, lvl)
    e1_ntt = small_to_rns_ntt(sample_gaussian(params, rng), params, lvl)
    e2_ntt = small_to_rns_ntt(sample_gaussian(params, rng), params, lvl)
    b = pk.b_ntt[:rows]
    a = pk.a_ntt[:rows]
    c0 = rns_add(rns_add(rns_pointwise_mul(b, u_ntt, params, lvl), e1_ntt,
                         params, lvl),
                 pt.poly, params, lvl)
    c1 = rns_add(rns_pointwise_mul(a, u_ntt, params, lvl), e2_ntt,
                 params, lvl)
    return Ciphertext(c0=c0, c1=c1, scale=pt.scale, level=lvl, params=params)


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    """m = c0 + c1*s at the ciphertext's level and scale."""
    params = ct.params
    if params is not sk.params and params != sk.params:
        raise StateError("ciphertext and key parameter sets differ")
    lvl = ct.level
    s = sk.s_ntt[: lvl + 1]
    poly = rns_add(ct.c0, rns_pointwise_mul(ct.c1, s, params, lvl),
                   params, lvl)
    return Plaintext(poly=poly, scale=ct.scale, level=lvl, params=params)


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Homomorphic addition; operands must share level and scale."""
    if a.params != b.params:
        raise StateError("parameter sets differ")
    if a.level != b.level:
        raise StateError(f"level mismatch: {a.level} vs {b.level}")
    if abs(a.scale - b.scale) > _SCALE_RTOL * max(a.scale, b.scale):
        raise StateError(f"scale mismatch: {a.scale} vs {b.scale}")
    return Ciphertext(
        c0=rns_add(a.c0, b.c0, a.params, a.level),
        c1=rns_add(a.c1, b.c1, a.params, a.level),
        scale=a.scale,
        level=a.level,
        params=a.params,
    )


def mul_plain_scalar(ct: Ciphertext, k: float) -> Ciphertext:
    """Multiply by a public scalar, then rescale (consumes one level).

    The scalar is encoded at scale q_top, the prime the rescale divides out,
    so the result keeps the input scale exactly. A scalar's plaintext is a
    constant polynomial, a constant vector in the NTT domain, so the multiply
    is a pointwise scalar modmul.
    """
    if not math.isfinite(k):
        raise ValueError("scalar must be finite")
    if ct.level < 1:
        raise DepthExhaustedError(
            "no modulus left to rescale into at level 0")
    params = ct.params
    q_top = params.primes[ct.level]
    s_int = round(k * q_top)
    c0 = rns_rescale(rns_scalar_mul(ct.c0, s_int, params, ct.level),
                     params, ct.level)
    c1 = rns_rescale(rns_scalar_mul(ct.c1, s_int, params, ct.level),
                     params, ct.level)
    # scalar encoded at scale q_top, rescale divides q_top back out
    return Ciphertext(c0=c0, c1=c1, scale=ct.scale, level=ct.level - 1,
                      params=params)


def rescale(ct: Ciphertext) -> Ciphertext:
    """Divide out the top active prime; level and scale both drop."""
    if ct.level < 1:
        raise DepthExhaustedError(
            "no modulus left to rescale into at level 0")
    params = ct.params
    q_top = params.primes[ct.level]
    return Ciphertext(
        c0=rns_rescale(ct.c0, params, ct.level),
        c1=rns_rescale(ct.c1, params, ct.level),
        scale=ct.scale / q_top,
        level=ct.level - 1,
        params=params,
    )
