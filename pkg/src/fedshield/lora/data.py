"""Synthetic desk-scale datasets and client partitioning."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from .model import Model, forward


@dataclass
class ToyDataset:
    inputs: np.ndarray   # (n, d_in) float64
    targets: np.ndarray  # (n, d_out) float64, or (n,) int64 labels
    task: str            # "regression" | "classification"

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ParameterError(f"unknown task {self.task!r}")
        if not np.all(np.isfinite(self.inputs)):
            raise ParameterError("non-finite inputs")
        if self.task == "regression" and not np.all(np.isfinite(self.targets)):
            raise ParameterError("non-finite targets")
        if len(self.inputs) != len(self.targets):
            raise ParameterError("inputs/targets length mismatch")

    @property
    def n(self) -> int:
        return len(self.inputs)

    def subset(self, idx) -> "ToyDataset":
        return ToyDataset(inputs=self.inputs[idx].copy(),
                          targets=self.targets[idx].copy(), task=self.task)


def planted_delta(d_in: int, d_out: int, planted_rank: int, delta_scale: float,
                  seed: int) -> np.ndarray:
    """Low-rank (d_in, d_out) shift reachable by adapters of rank >= planted."""
    rng = np.random.default_rng(seed)
    u = rng.normal(0.0, 1.0, size=(d_in, planted_rank))
    v = rng.normal(0.0, 1.0, size=(planted_rank, d_out))
    delta = u @ v
    return delta * (delta_scale / max(np.abs(delta).max(), 1e-12))


def make_planted_regression(model: Model, n: int, seed: int,
                            planted_rank: int = 2, delta_scale: float = 1.0,
                            noise_std: float = 0.0) -> ToyDataset:
    """Targets = base(x) + x @ Delta + noise with low-rank planted Delta.

    With a single-layer identity model, the loss is convex in the effective
    weight shift and the optimum (loss = mean noise^2) is reachable by any
    adapter of rank >= planted_rank.
    """
    d_in = model.layers[0].d_in
    d_out = model.layers[-1].d_out
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, size=(n, d_in))
    delta = planted_delta(d_in, d_out, planted_rank, delta_scale,
                          seed=seed + 1)
    y = forward(model, None, x) + x @ delta
    if noise_std > 0:
        y = y + rng.normal(0.0, noise_std, size=y.shape)
    return ToyDataset(inputs=x, targets=y, task="regression")


def make_blobs(n: int, d_in: int, n_classes: int, seed: int,
               spread: float = 1.0) -> ToyDataset:
    """Gaussian class blobs with unit-ball centers scaled by spread."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(n_classes, d_in))
    labels = rng.integers(0, n_classes, size=n)
    x = centers[labels] + rng.normal(0.0, 0.5, size=(n, d_in))
    return ToyDataset(inputs=x, targets=labels.astype(np.int64),
                      task="classification")


def split_pool(pool: ToyDataset, n_clients: int,
               seed: int) -> list[ToyDataset]:
    """Shuffle one pool and deal disjoint, near-equal shards."""
    if n_clients < 1:
        raise ParameterError("need at least one client")
    perm = np.random.default_rng(seed).permutation(pool.n)
    shards = np.array_split(perm, n_clients)
    return [pool.subset(s) for s in shards]


def save_client_dataset(path, ds: ToyDataset) -> None:
    np.savez(path, inputs=ds.inputs, targets=ds.targets,
             task=np.array(ds.task))


def load_client_dataset(path) -> ToyDataset:
    with np.load(path) as z:
        return ToyDataset(inputs=z["inputs"], targets=z["targets"],
                          task=str(z["task"]))


def client_file_name(index: int) -> str:
    return f"client_{index:02d}.npz"
