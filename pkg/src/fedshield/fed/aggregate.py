"""Client selection, plaintext and encrypted averaging, DP privatization."""
from __future__ import annotations

import numpy as np

from ..ckks.ops import add, mul_plain_scalar
from ..ckks.params import CkksParams
from ..ckks.wire import deserialize_ct
from ..errors import ParameterError, StateError
from ..lora.train import LoraUpdate
from .messages import KIND_ENCRYPTED, derive_seed

_SELECT_TAG = 11


def select_clients(n_clients: int, k: int, round_index: int,
                   seed: int) -> list[int]:
    """Uniform sample without replacement, deterministic per (seed, round)."""
    if not 1 <= k <= n_clients:
        raise ParameterError(
            f"need 1 <= k <= {n_clients} clients per round, got {k}")
    rng = np.random.default_rng([seed, _SELECT_TAG, round_index])
    picked = rng.choice(n_clients, size=k, replace=False)
    return sorted(int(c) for c in picked)


def _check_same_layout(base: LoraUpdate, other: LoraUpdate):
    if len(base.d_a) != len(other.d_a) or len(base.d_b) != len(other.d_b):
        raise ParameterError("updates have different layer counts")
    if (base.d_bias is None) != (other.d_bias is None):
        raise ParameterError("updates disagree on bias deltas")
    for t0, t1 in zip(base.tensors(), other.tensors()):
        if t0.shape != t1.shape:
            raise ParameterError(
                f"update tensor shapes differ: {t0.shape} vs {t1.shape}")


def aggregate_plain(updates, weights=None) -> LoraUpdate:
    """Weighted elementwise mean; exact identity on k equal updates.

    Computed as u0 + sum_i w_i * (u_i - u0) so identical inputs reproduce
    the input bit-for-bit (every difference term is exactly zero).
    """
    updates = list(updates)
    if not updates:
        raise ParameterError("nothing to aggregate")
    m = len(updates)
    if weights is None:
        weights = [1.0 / m] * m
    weights = [float(w) for w in weights]
    if len(weights) != m:
        raise ParameterError(f"{m} updates but {len(weights)} weights")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ParameterError(f"weights sum to {sum(weights)}, not 1")
    base = updates[0]
    for other in updates[1:]:
        _check_same_layout(base, other)
    out = base.copy()
    acc = out.tensors()
    ref = base.tensors()
    for w, upd in zip(weights, updates):
        for slot, t, t0 in zip(acc, upd.tensors(), ref):
            slot += w * (t - t0)
    out.round_index = base.round_index
    out.client_id = -1
    return out


def data_size_weights(sizes) -> list[float]:
    sizes = [int(s) for s in sizes]
    if any(s < 1 for s in sizes):
        raise ParameterError("dataset sizes must be >= 1")
    total = sum(sizes)
    return [s / total for s in sizes]


def aggregate_encrypted(messages, params: CkksParams):
    """Homomorphic sum then multiply by 1/m. Uniform weighting only.

    Messages must share round, packing descriptor, and tensor layout; the
    ciphertext add itself enforces matching level and scale. Mean division
    costs the one ciphertext level the modulus chain reserves for it.
    """
    messages = list(messages)
    if not messages:
        raise ParameterError("nothing to aggregate")
    first = messages[0]
    for msg in messages:
        if msg.kind != KIND_ENCRYPTED:
            raise ParameterError(
                f"client {msg.client_id} sent a {msg.kind!r} payload")
        if msg.round_index != first.round_index:
            raise StateError(
                f"round mismatch: {msg.round_index} vs {first.round_index}")
        if msg.descriptor != first.descriptor:
            raise ParameterError("packing descriptors differ across clients")
        if (msg.n_a, msg.n_b, msg.n_bias) != (first.n_a, first.n_b,
                                              first.n_bias):
            raise ParameterError("tensor layouts differ across clients")
        if len(msg.blobs) != len(first.blobs):
            raise ParameterError("chunk counts differ across clients")
    m = len(messages)
    ordered = sorted(messages, key=lambda msg: msg.client_id)
    per_client = [[deserialize_ct(blob, params) for blob in msg.blobs]
                  for msg in ordered]
    out = []
    for j in range(len(first.blobs)):
        acc = per_client[0][j]
        for cts in per_client[1:]:
            acc = add(acc, cts[j])
        out.append(mul_plain_scalar(acc, 1.0 / m))
    return out


def dp_privatize(update: LoraUpdate, clip: float, sigma: float,
                 seed: int) -> LoraUpdate:
    """Clip the update to L2 norm <= clip, then add N(0, (sigma*clip)^2)."""
    if clip <= 0:
        raise ParameterError(f"clip must be positive, got {clip}")
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    norm = update.norm()
    factor = min(1.0, clip / norm) if norm > 0 else 1.0
    rng = np.random.default_rng(derive_seed(seed, 13))
    std = sigma * clip
    return update.map(
        lambda t: t * factor + rng.normal(0.0, std, size=t.shape))
