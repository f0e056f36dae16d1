"""Dynamic magnitude pruning of adapter updates.

The round-indexed schedule ramps the prune rate linearly from p0 to p_target
between t_eff and t_target and clamps afterwards. Masking zeroes exactly
floor(p * len) entries of smallest absolute value per tensor, ties broken by
lowest flat index. Default granularity masks each factor delta (dA, dB)
independently; the alternate product mode masks the composed weight delta
and re-fits the factors by truncated SVD.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .lora.train import LoraUpdate

GRANULARITIES = ("factor", "product")


@dataclass(frozen=True)
class PruneSchedule:
    p0: float = 0.2
    p_target: float = 0.5
    t_eff: int = 0
    t_target: int = 200

    def __post_init__(self):
        if not 0.0 <= self.p0 <= self.p_target <= 1.0:
            raise ParameterError(
                f"need 0 <= p0 <= p_target <= 1, got {self.p0},"
                f" {self.p_target}")
        if self.t_target <= self.t_eff:
            raise ParameterError(
                f"need t_eff < t_target, got {self.t_eff}, {self.t_target}")


def schedule_rate(sched: PruneSchedule, t: int) -> float:
    """Prune rate at round t; total over all integer t, clamped at p_target."""
    if t >= sched.t_target:
        return sched.p_target
    frac = max(0.0, (t - sched.t_eff) / (sched.t_target - sched.t_eff))
    return frac * (sched.p_target - sched.p0) + sched.p0


@dataclass(frozen=True)
class PruneMask:
    """{0,1} float tensors aligned with a LoraUpdate's tensors."""

    m_a: tuple
    m_b: tuple
    m_bias: tuple | None = None
    rate: float = 0.0  # nominal rate the mask was computed for

    def tensors(self):
        out = list(self.m_a) + list(self.m_b)
        if self.m_bias is not None:
            out += list(self.m_bias)
        return out

    def zero_fraction(self) -> float:
        total = sum(t.size for t in self.tensors())
        zeros = sum(int((t == 0.0).sum()) for t in self.tensors())
        return zeros / total if total else 0.0


def _mask_one(flat: np.ndarray, p: float) -> np.ndarray:
    k = math.floor(p * flat.size)
    mask = np.ones(flat.size, dtype=np.float64)
    if k > 0:
        order = np.argsort(np.abs(flat.ravel()), kind="stable")
        mask[order[:k]] = 0.0
    return mask.reshape(flat.shape)


def compute_mask(update: LoraUpdate, p: float,
                 tie_seed: int = 0) -> PruneMask:
    """Per-tensor smallest-|value| mask zeroing exactly floor(p*len) entries.

    tie_seed is reserved; ties are broken deterministically by lowest flat
    index, so it has no effect.
    """
    del tie_seed
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"prune rate must lie in [0, 1), got {p}")
    return PruneMask(
        m_a=tuple(_mask_one(t, p) for t in update.d_a),
        m_b=tuple(_mask_one(t, p) for t in update.d_b),
        m_bias=None if update.d_bias is None
        else tuple(_mask_one(t, p) for t in update.d_bias),
        rate=p,
    )


def apply_mask(update: LoraUpdate, mask: PruneMask) -> LoraUpdate:
    """Elementwise product; kept entries are bit-identical to the input."""
    if len(mask.m_a) != len(update.d_a) or len(mask.m_b) != len(update.d_b):
        raise ParameterError("mask does not match update layout")
    has_bias = update.d_bias is not None
    if has_bias != (mask.m_bias is not None):
        raise ParameterError("mask does not match update layout")
    return LoraUpdate(
        d_a=[t * m for t, m in zip(update.d_a, mask.m_a)],
        d_b=[t * m for t, m in zip(update.d_b, mask.m_b)],
        d_bias=None if not has_bias
        else [t * m for t, m in zip(update.d_bias, mask.m_bias)],
        round_index=update.round_index,
        client_id=update.client_id,
    )


def pruning_error_norm(update: LoraUpdate, pruned: LoraUpdate) -> float:
    """L2 norm of what masking removed, over all tensors."""
    total = 0.0
    for orig, cut in zip(update.tensors(), pruned.tensors()):
        total += float(np.sum((orig - cut) ** 2))
    return math.sqrt(total)


def prune_update(update: LoraUpdate, p: float):
    """Convenience: mask, apply, and report the error norm."""
    mask = compute_mask(update, p)
    pruned = apply_mask(update, mask)
    return pruned, mask, pruning_error_norm(update, pruned)


def product_prune_update(adapters, update: LoraUpdate, p: float):
    """Alternate granularity: mask the composed weight delta.

    For each layer the composed update D = s*((A+dA)(B+dB) - A B) is masked
    entrywise like any tensor, then factor deltas are re-fit so that the new
    composition is the best rank-r approximation (truncated SVD) of the
    masked target. Returns (update, error norm of the composed-space cut).
    """
    if update.d_bias is not None:
        raise ParameterError("product masking applies to factor updates only")
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"prune rate must lie in [0, 1), got {p}")
    new_da, new_db = [], []
    err_sq = 0.0
    for ad, da, db in zip(adapters, update.d_a, update.d_b):
        comp = (ad.a + da) @ (ad.b + db) - ad.a @ ad.b
        masked = comp * _mask_one(comp, p)
        err_sq += float(np.sum((ad.scaling * (comp - masked)) ** 2))
        target = ad.a @ ad.b + masked
        u, s, vt = np.linalg.svd(target, full_matrices=False)
        r = ad.rank
        root = np.sqrt(s[:r])
        a_new = u[:, :r] * root[None, :]
        b_new = root[:, None] * vt[:r]
        new_da.append(a_new - ad.a)
        new_db.append(b_new - ad.b)
    return (LoraUpdate(d_a=new_da, d_b=new_db,
                       round_index=update.round_index,
                       client_id=update.client_id),
            math.sqrt(err_sq))
