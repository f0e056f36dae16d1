"""Canonical-embedding encoder: real slot vectors <-> ring plaintexts.

A real polynomial m(x) in R[x]/(x^n + 1) is evaluated at the n primitive
2n-th roots of unity zeta^(2j+1). Slots take the evaluations at exponents
5^h mod 2n (h = 0..n/2-1); the remaining roots are their conjugates, which
pins the polynomial to real coefficients. Both directions run through a
length-n FFT with a zeta^k twist, so encode/decode are O(n log n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import CapacityError, RangeError, StateError
from .params import CkksParams
from .poly import crt_centered, ints_to_rns, rns_intt, rns_ntt


@dataclass(frozen=True)
class Plaintext:
    """Encoded message: NTT-domain RNS rows plus scale and level."""

    poly: np.ndarray  # (level+1, n) uint64, NTT domain
    scale: float
    level: int
    params: CkksParams

    @property
    def slot_count(self) -> int:
        return self.params.slot_count


@lru_cache(maxsize=8)
def _embedding_tables(n: int):
    """(slot -> fft index) map and the zeta^k twist vectors for degree n."""
    half = n // 2
    idx = np.empty(half, dtype=np.int64)
    e = 1
    for h in range(half):
        idx[h] = (e - 1) // 2
        e = e * 5 % (2 * n)
    k = np.arange(n)
    twist = np.exp(1j * math.pi * k / n)
    return idx, twist


def embed_to_coeffs(values: np.ndarray, n: int) -> np.ndarray:
    """Real slot values (length n/2) -> real polynomial coefficients."""
    idx, twist = _embedding_tables(n)
    evals = np.zeros(n, dtype=np.complex128)
    evals[idx] = values
    evals[n - 1 - idx] = np.conj(values.astype(np.complex128))
    t = np.fft.fft(evals) / n
    return (t * np.conj(twist)).real


def coeffs_to_slots(coeffs: np.ndarray, n: int) -> np.ndarray:
    """Real polynomial coefficients -> real slot values (length n/2)."""
    idx, twist = _embedding_tables(n)
    evals = np.fft.ifft(coeffs * twist) * n
    return evals[idx].real


def encode(values, scale: float, params: CkksParams,
           level: int | None = None) -> Plaintext:
    """Encode up to n/2 reals at the given scale; pads unused slots with 0."""
    if level is None:
        level = params.max_level
    if not 0 <= level <= params.max_level:
        raise StateError(f"level {level} outside chain")
    vec = np.asarray(values, dtype=np.float64).ravel()
    half = params.slot_count
    if vec.size > half:
        raise CapacityError(
            f"{vec.size} values exceed {half} slots at degree"
            f" {params.poly_degree}")
    if not np.all(np.isfinite(vec)):
        raise RangeError("values must be finite")
    peak = float(np.max(np.abs(vec))) if vec.size else 0.0
    if peak * scale > 0 and math.log2(peak * scale) > params.headroom_log2(level):
        raise RangeError(
            f"|value|*scale = {peak * scale:.3e} exceeds modulus headroom at"
            f" level {level}")
    full = np.zeros(half, dtype=np.float64)
    full[: vec.size] = vec
    coeffs = embed_to_coeffs(full, params.poly_degree) * scale
    ints = np.array([int(c) for c in np.rint(coeffs)], dtype=object)
    poly = rns_ntt(ints_to_rns(ints, params, level), params, level)
    return Plaintext(poly=poly, scale=float(scale), level=level, params=params)


def decode(pt: Plaintext) -> np.ndarray:
    """Decode a plaintext back to n/2 real slot values."""
    coeff_rows = rns_intt(pt.poly, pt.params, pt.level)
    centered = crt_centered(coeff_rows, pt.params, pt.level)
    coeffs = np.array([float(c) for c in centered]) / pt.scale
    return coeffs_to_slots(coeffs, pt.params.poly_degree)
