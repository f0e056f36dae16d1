"""The one message type clients send: a pruned update, plain or encrypted.

Wire layout (little-endian): magic "FSUM", version u16, meta length u32,
meta JSON (sorted keys), blob count u32, then length-prefixed blobs. Plain
payloads carry one raw float64 blob per tensor; encrypted payloads carry one
serialized ciphertext per packed slot chunk. The meta block holds ids, the
payload kind, the tensor layout, and the packing descriptor, so a message is
self-describing and byte-stable for identical inputs.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..ckks.encode import encode
from ..ckks.keys import PublicKey
from ..ckks.ops import encrypt
from ..ckks.packing import PackingDescriptor, pack_tensors
from ..ckks.wire import serialize_ct
from ..errors import FormatError, ParameterError
from ..lora.train import LoraUpdate

_MAGIC = b"FSUM"
_VERSION = 1
_HEADER = struct.Struct("<4sHI")
_U32 = struct.Struct("<I")

KIND_PLAIN = "plain"
KIND_ENCRYPTED = "encrypted"


def derive_seed(*parts: int) -> int:
    """Stable scalar seed from integer coordinates (run seed, round, ...)."""
    state = np.random.SeedSequence(list(parts)).generate_state(2, np.uint64)
    return int(state[0]) ^ (int(state[1]) << 64)


@dataclass(frozen=True)
class UpdateMessage:
    client_id: int
    round_index: int
    kind: str
    n_a: int
    n_b: int
    n_bias: int
    descriptor: PackingDescriptor
    blobs: tuple

    def meta(self) -> dict:
        return {
            "client_id": self.client_id,
            "round": self.round_index,
            "kind": self.kind,
            "n_a": self.n_a,
            "n_b": self.n_b,
            "n_bias": self.n_bias,
            "packing": json.loads(self.descriptor.to_json()),
        }


def _layout(update: LoraUpdate):
    return (len(update.d_a), len(update.d_b),
            0 if update.d_bias is None else len(update.d_bias))


def make_plain_message(update: LoraUpdate) -> UpdateMessage:
    """Payload is the raw float64 bytes of every tensor, in order."""
    tensors = update.tensors()
    desc = PackingDescriptor(
        shapes=tuple(t.shape for t in tensors),
        slot_count=max(1, sum(t.size for t in tensors)))
    blobs = tuple(np.ascontiguousarray(t, dtype="<f8").tobytes()
                  for t in tensors)
    n_a, n_b, n_bias = _layout(update)
    return UpdateMessage(client_id=update.client_id,
                         round_index=update.round_index,
                         kind=KIND_PLAIN, n_a=n_a, n_b=n_b, n_bias=n_bias,
                         descriptor=desc, blobs=blobs)


def make_encrypted_message(update: LoraUpdate, pk: PublicKey,
                           base_seed: int) -> UpdateMessage:
    """Pack tensors into slot chunks, encrypt each chunk at full level."""
    params = pk.params
    chunks, desc = pack_tensors(update.tensors(), params.slot_count)
    blobs = []
    for i, chunk in enumerate(chunks):
        pt = encode(chunk, params.scale, params)
        ct = encrypt(pt, pk, seed=derive_seed(base_seed, i))
        blobs.append(serialize_ct(ct))
    n_a, n_b, n_bias = _layout(update)
    return UpdateMessage(client_id=update.client_id,
                         round_index=update.round_index,
                         kind=KIND_ENCRYPTED, n_a=n_a, n_b=n_b,
                         n_bias=n_bias, descriptor=desc, blobs=tuple(blobs))


def plain_update_from_message(msg: UpdateMessage) -> LoraUpdate:
    if msg.kind != KIND_PLAIN:
        raise ParameterError(f"message kind is {msg.kind!r}, not plain")
    shapes = msg.descriptor.shapes
    if len(shapes) != len(msg.blobs):
        raise FormatError("blob count does not match descriptor")
    tensors = []
    for shape, blob in zip(shapes, msg.blobs):
        size = int(np.prod(shape, dtype=np.int64))
        if len(blob) != 8 * size:
            raise FormatError(
                f"tensor blob of {len(blob)} bytes does not hold"
                f" shape {shape}")
        tensors.append(np.frombuffer(blob, dtype="<f8").reshape(shape).copy())
    return tensors_to_update(tensors, msg.n_a, msg.n_b, msg.n_bias,
                             round_index=msg.round_index,
                             client_id=msg.client_id)


def tensors_to_update(tensors, n_a: int, n_b: int, n_bias: int,
                      round_index: int = -1,
                      client_id: int = -1) -> LoraUpdate:
    if len(tensors) != n_a + n_b + n_bias:
        raise FormatError(
            f"layout {n_a}+{n_b}+{n_bias} does not match"
            f" {len(tensors)} tensors")
    return LoraUpdate(
        d_a=list(tensors[:n_a]),
        d_b=list(tensors[n_a:n_a + n_b]),
        d_bias=None if n_bias == 0 else list(tensors[n_a + n_b:]),
        round_index=round_index, client_id=client_id)


def serialize_message(msg: UpdateMessage) -> bytes:
    if msg.kind not in (KIND_PLAIN, KIND_ENCRYPTED):
        raise ParameterError(f"unknown message kind {msg.kind!r}")
    meta = json.dumps(msg.meta(), sort_keys=True,
                      separators=(",", ":")).encode("utf-8")
    out = [_HEADER.pack(_MAGIC, _VERSION, len(meta)), meta,
           _U32.pack(len(msg.blobs))]
    for blob in msg.blobs:
        out.append(_U32.pack(len(blob)))
        out.append(blob)
    return b"".join(out)


def deserialize_message(data: bytes) -> UpdateMessage:
    if len(data) < _HEADER.size:
        raise FormatError("message shorter than its header")
    magic, version, meta_len = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad message magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported message version {version}")
    off = _HEADER.size
    if len(data) < off + meta_len + _U32.size:
        raise FormatError("truncated message meta block")
    try:
        meta = json.loads(data[off:off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad message meta block: {exc}") from exc
    off += meta_len
    (n_blobs,) = _U32.unpack_from(data, off)
    off += _U32.size
    blobs = []
    for _ in range(n_blobs):
        if len(data) < off + _U32.size:
            raise FormatError("truncated blob length")
        (blen,) = _U32.unpack_from(data, off)
        off += _U32.size
        if len(data) < off + blen:
            raise FormatError("truncated blob body")
        blobs.append(data[off:off + blen])
        off += blen
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after message")
    try:
        kind = meta["kind"]
        desc = PackingDescriptor.from_json(json.dumps(meta["packing"]))
        msg = UpdateMessage(client_id=int(meta["client_id"]),
                            round_index=int(meta["round"]),
                            kind=kind, n_a=int(meta["n_a"]),
                            n_b=int(meta["n_b"]), n_bias=int(meta["n_bias"]),
                            descriptor=desc, blobs=tuple(blobs))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"incomplete message meta: {exc}") from exc
    if kind not in (KIND_PLAIN, KIND_ENCRYPTED):
        raise FormatError(f"unknown message kind {kind!r}")
    if len(desc.shapes) != msg.n_a + msg.n_b + msg.n_bias:
        raise FormatError("descriptor layout mismatch")
    return msg
