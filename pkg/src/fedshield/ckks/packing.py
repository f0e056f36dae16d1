"""Slot packing: flatten tensor lists into fixed-width slot chunks.

Tensors are flattened row-major, concatenated, and split into
ceil(total / slot_count) chunks; the tail chunk is zero-padded. The
descriptor records shapes so the receiver can cut the decoded vector back
into tensors and drop the padding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError


def ciphertext_count(total_len: int, slot_count: int) -> int:
    """Number of chunks needed: ceil(total_len / slot_count)."""
    if total_len < 0 or slot_count <= 0:
        raise ParameterError("total_len must be >= 0 and slot_count > 0")
    return -(-total_len // slot_count)


@dataclass(frozen=True)
class PackingDescriptor:
    shapes: tuple[tuple[int, ...], ...]
    slot_count: int

    @property
    def total_len(self) -> int:
        return sum(int(np.prod(s, dtype=np.int64)) for s in self.shapes)

    @property
    def n_chunks(self) -> int:
        return ciphertext_count(self.total_len, self.slot_count)

    def to_json(self) -> str:
        return json.dumps({"shapes": [list(s) for s in self.shapes],
                           "slot_count": self.slot_count})

    @classmethod
    def from_json(cls, text: str) -> "PackingDescriptor":
        obj = json.loads(text)
        return cls(shapes=tuple(tuple(int(d) for d in s)
                                for s in obj["shapes"]),
                   slot_count=int(obj["slot_count"]))


def pack_tensors(tensors, slot_count: int):
    """-> (list of float64 chunks of length slot_count, descriptor)."""
    arrays = [np.asarray(t, dtype=np.float64) for t in tensors]
    desc = PackingDescriptor(shapes=tuple(a.shape for a in arrays),
                             slot_count=int(slot_count))
    flat = (np.concatenate([a.ravel() for a in arrays])
            if arrays else np.zeros(0))
    chunks = []
    for i in range(desc.n_chunks):
        chunk = np.zeros(slot_count, dtype=np.float64)
        piece = flat[i * slot_count:(i + 1) * slot_count]
        chunk[: piece.size] = piece
        chunks.append(chunk)
    return chunks, desc


def unpack_tensors(values: np.ndarray, desc: PackingDescriptor):
    """Inverse of pack_tensors given the concatenated decoded vector."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    if flat.size < desc.total_len:
        raise ParameterError(
            f"need {desc.total_len} values, got {flat.size}")
    out = []
    off = 0
    for shape in desc.shapes:
        size = int(np.prod(shape, dtype=np.int64))
        out.append(flat[off: off + size].reshape(shape).copy())
        off += size
    return out


def concat_chunks(chunks) -> np.ndarray:
    """Join decoded slot chunks back into one flat vector (padding kept)."""
    if not chunks:
        return np.zeros(0)
    return np.concatenate([np.asarray(c, dtype=np.float64).ravel()
                           for c in chunks])
