"""Adapter checkpoint format.

Layout, all little-endian:

    magic "FSLA" | version u16 | adapter_count u16 |
    per adapter: layer_index u32, rank u32, alpha f64,
                 d_in u32, d_out u32,
                 A (d_in*rank f64, row-major), B (rank*d_out f64, row-major)
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import LoraAdapter

MAGIC = b"FSLA"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
_ADAPTER = struct.Struct("<IIdII")


def adapters_to_bytes(adapters) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, len(adapters))]
    for ad in adapters:
        d_in, r = ad.a.shape
        r2, d_out = ad.b.shape
        parts.append(_ADAPTER.pack(ad.layer_index, r, ad.alpha, d_in, d_out))
        parts.append(np.ascontiguousarray(ad.a, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(ad.b, dtype="<f8").tobytes())
    return b"".join(parts)


def adapters_from_bytes(data: bytes) -> list[LoraAdapter]:
    if len(data) < _HEADER.size:
        raise FormatError("truncated adapter checkpoint header")
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    off = _HEADER.size
    adapters = []
    for _ in range(count):
        if len(data) < off + _ADAPTER.size:
            raise FormatError("truncated adapter record")
        layer_index, r, alpha, d_in, d_out = _ADAPTER.unpack_from(data, off)
        off += _ADAPTER.size
        a_bytes = 8 * d_in * r
        b_bytes = 8 * r * d_out
        if len(data) < off + a_bytes + b_bytes:
            raise FormatError("truncated adapter tensors")
        a = np.frombuffer(data, dtype="<f8", count=d_in * r,
                          offset=off).reshape(d_in, r).copy()
        off += a_bytes
        b = np.frombuffer(data, dtype="<f8", count=r * d_out,
                          offset=off).reshape(r, d_out).copy()
        off += b_bytes
        adapters.append(LoraAdapter(layer_index=layer_index, a=a, b=b,
                                    alpha=alpha))
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes")
    return adapters


def save_adapters(path, adapters) -> None:
    Path(path).write_bytes(adapters_to_bytes(adapters))


def load_adapters(path) -> list[LoraAdapter]:
    return adapters_from_bytes(Path(path).read_bytes())
