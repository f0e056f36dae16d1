"""CKKS parameter sets: polynomial degree, RNS modulus chain, scale."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

from ..errors import ParameterError
from .ntt import NttPlan, find_ntt_prime, get_plan

_MIN_DEGREE = 16
_MIN_BITS = 20
_MAX_BITS = 60


@dataclass(frozen=True)
class CkksParams:
    """Immutable parameter set.

    poly_degree: ring degree n (power of two); n/2 plaintext slots.
    modulus_bits: bit sizes of the RNS chain, e.g. (60, 40, 60). A fresh
        ciphertext sits at level len(chain)-1 and each rescale consumes the
        top active modulus.
    scale_bits: log2 of the fixed encoding scale.
    noise_stddev: stddev of the discrete Gaussian error sampler.
    """

    poly_degree: int
    modulus_bits: tuple[int, ...] = (60, 40, 60)
    scale_bits: int = 40
    noise_stddev: float = 3.2

    def __post_init__(self):
        n = self.poly_degree
        if n < _MIN_DEGREE or n & (n - 1):
            raise ParameterError(
                f"poly_degree must be a power of two >= {_MIN_DEGREE}, got {n}")
        bits = tuple(int(b) for b in self.modulus_bits)
        object.__setattr__(self, "modulus_bits", bits)
        if len(bits) < 2:
            raise ParameterError("modulus chain needs at least 2 primes")
        for b in bits:
            if not _MIN_BITS <= b <= _MAX_BITS:
                raise ParameterError(
                    f"modulus bit sizes must lie in [{_MIN_BITS}, {_MAX_BITS}],"
                    f" got {b}")
        middle = bits[1:-1] if len(bits) > 2 else bits
        if self.scale_bits > min(middle) + 10:
            raise ParameterError(
                f"scale 2^{self.scale_bits} too large for middle moduli"
                f" {middle}")
        if self.scale_bits < 10:
            raise ParameterError("scale below 2^10 leaves no precision")
        if not (self.noise_stddev > 0):
            raise ParameterError("noise_stddev must be positive")

    @cached_property
    def primes(self) -> tuple[int, ...]:
        """Distinct NTT-friendly primes, one per chain entry."""
        found: list[int] = []
        for b in self.modulus_bits:
            found.append(find_ntt_prime(b, 2 * self.poly_degree, found))
        return tuple(found)

    @property
    def slot_count(self) -> int:
        return self.poly_degree // 2

    @property
    def scale(self) -> float:
        return float(2 ** self.scale_bits)

    @property
    def max_level(self) -> int:
        return len(self.modulus_bits) - 1

    def plan(self, level_index: int) -> NttPlan:
        """NTT plan for the modulus at a given chain index."""
        return get_plan(self.primes[level_index], self.poly_degree)

    def headroom_log2(self, level: int) -> float:
        """log2 of the safe coefficient bound at a level (10-bit margin)."""
        return float(sum(self.modulus_bits[: level + 1]) - 10)


def default_test_params(poly_degree: int = 4096) -> CkksParams:
    """Desk-scale parameters used by the protocol and the test suite."""
    return CkksParams(poly_degree=poly_degree, modulus_bits=(60, 40, 60))


def bench_params() -> CkksParams:
    """Deployment-scale parameters, used by the benchmark command only."""
    return CkksParams(poly_degree=16384, modulus_bits=(60, 40, 40, 40, 60))
