"""Leveled homomorphic encryption for secure update aggregation.

RNS-CKKS with negacyclic NTT arithmetic, restricted to what the protocol
needs: encode/encrypt, homomorphic addition, one plaintext-scalar multiply
with rescale, decrypt/decode, and a binary wire format.
"""
from .encode import Plaintext, coeffs_to_slots, decode, embed_to_coeffs, encode
from .keys import PublicKey, SecretKey, keygen
from .ops import Ciphertext, add, decrypt, encrypt, mul_plain_scalar, rescale
from .packing import (
    PackingDescriptor,
    ciphertext_count,
    concat_chunks,
    pack_tensors,
    unpack_tensors,
)
from .params import CkksParams, bench_params, default_test_params
from .wire import deserialize_ct, serialize_ct

__all__ = [
    "Ciphertext",
    "CkksParams",
    "PackingDescriptor",
    "Plaintext",
    "PublicKey",
    "SecretKey",
    "add",
    "bench_params",
    "ciphertext_count",
    "coeffs_to_slots",
    "concat_chunks",
    "decode",
    "decrypt",
    "default_test_params",
    "deserialize_ct",
    "embed_to_coeffs",
    "encode",
    "encrypt",
    "keygen",
    "mul_plain_scalar",
    "pack_tensors",
    "rescale",
    "serialize_ct",
    "unpack_tensors",
]
