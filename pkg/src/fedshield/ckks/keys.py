"""Key generation for the RLWE pair used by the aggregation scheme.

Secret s is ternary; the public key is (b, a) with b = -a*s + e for uniform
a and discrete Gaussian e. There is deliberately no serializer for
SecretKey: it never leaves the key authority.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import CkksParams
from .poly import (
    rns_add,
    rns_neg,
    rns_pointwise_mul,
    sample_gaussian,
    sample_ternary,
    sample_uniform_ntt,
    small_to_rns_ntt,
)


@dataclass(frozen=True)
class SecretKey:
    params: CkksParams
    s_ntt: np.ndarray  # (chain, n) uint64, NTT domain

    def __repr__(self):  # keep key material out of logs
        return f"SecretKey(degree={self.params.poly_degree})"


@dataclass(frozen=True)
class PublicKey:
    params: CkksParams
    b_ntt: np.ndarray  # (chain, n) uint64, NTT domain
    a_ntt: np.ndarray


def keygen(params: CkksParams, seed: int) -> tuple[SecretKey, PublicKey]:
    """Deterministic keypair from a seed; full-chain level."""
    rng = np.random.default_rng(seed)
    top = params.max_level
    s = sample_ternary(params, rng)
    s_ntt = small_to_rns_ntt(s, params, top)
    a_ntt = sample_uniform_ntt(params, top, rng)
    e_ntt = small_to_rns_ntt(sample_gaussian(params, rng), params, top)
    b_ntt = rns_add(rns_neg(rns_pointwise_mul(a_ntt, s_ntt, params, top),
                            params, top),
                    e_ntt, params, top)
    return (SecretKey(params=params, s_ntt=s_ntt),
            PublicKey(params=params, b_ntt=b_ntt, a_ntt=a_ntt))
