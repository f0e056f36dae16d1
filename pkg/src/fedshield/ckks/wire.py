"""Ciphertext wire format.

Layout, all little-endian:

    magic "FSHE" | version u16 | poly_degree u32 | level u8 |
    modulus_count u8 | scale f64 |
    per active modulus: prime u64, c0 row (poly_degree x u64),
                        c1 row (poly_degree x u64)

Residue rows are written in the internal NTT-domain representation, so
serialize/deserialize roundtrips are bit-exact.
"""
from __future__ import annotations

import struct

import numpy as np

from ..errors import FormatError
from .ops import Ciphertext
from .params import CkksParams

MAGIC = b"FSHE"
VERSION = 1
_HEADER = struct.Struct("<4sHIBBd")


def serialize_ct(ct: Ciphertext) -> bytes:
    rows = ct.level + 1
    parts = [_HEADER.pack(MAGIC, VERSION, ct.params.poly_degree, ct.level,
                          rows, ct.scale)]
    for j in range(rows):
        parts.append(struct.pack("<Q", ct.params.primes[j]))
        parts.append(ct.c0[j].astype("<u8").tobytes())
        parts.append(ct.c1[j].astype("<u8").tobytes())
    return b"".join(parts)


def deserialize_ct(data: bytes, params: CkksParams) -> Ciphertext:
    if len(data) < _HEADER.size:
        raise FormatError("truncated ciphertext header")
    magic, version, degree, level, rows, scale = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if degree != params.poly_degree:
        raise FormatError(
            f"degree {degree} does not match parameter set"
            f" ({params.poly_degree})")
    if rows != level + 1 or level > params.max_level:
        raise FormatError(f"inconsistent level {level} / modulus count {rows}")
    n = params.poly_degree
    row_bytes = 8 + 2 * 8 * n
    expected = _HEADER.size + rows * row_bytes
    if len(data) != expected:
        raise FormatError(
            f"length {len(data)} != expected {expected} for degree {n},"
            f" {rows} moduli")
    c0 = np.empty((rows, n), dtype=np.uint64)
    c1 = np.empty((rows, n), dtype=np.uint64)
    off = _HEADER.size
    for j in range(rows):
        (prime,) = struct.unpack_from("<Q", data, off)
        off += 8
        if prime != params.primes[j]:
            raise FormatError(
                f"modulus {prime} at index {j} does not match parameter set")
        c0[j] = np.frombuffer(data, dtype="<u8", count=n, offset=off)
        off += 8 * n
        c1[j] = np.frombuffer(data, dtype="<u8", count=n, offset=off)
        off += 8 * n
    return Ciphertext(c0=c0, c1=c1, scale=scale, level=level, params=params)
