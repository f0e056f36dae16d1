"""Gradient-inversion harness: how much does masking blunt reconstruction.

The victim is a single linear layer with a warm low-rank adapter (B nonzero
so the A-factor gradient is input-bearing) and a trainable bias whose
gradient pins the residual, making the p=0 inversion well posed. The
attacker sees one pruned single-step update, knows the architecture, base
weights, adapter state, and targets, and runs gradient matching: descend on
a dummy input until its masked gradient reproduces the observation. The
descent is plain but guarded, each step backtracks by halving until the
match loss drops (the loss is quartic in the dummy input, so a fixed step
diverges), and a few seeded restarts escape bad basins. Input gradients are
central finite differences, which keeps the attacker architecture-agnostic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .fed.messages import derive_seed
from .lora.model import LoraAdapter, Model, init_model
from .lora.train import LoraUpdate, backward
from .pruning import prune_update

_TAG_VICTIM = 31
_TAG_BATCH = 32
_TAG_RESTART = 33
_MAX_HALVINGS = 40


@dataclass(frozen=True)
class AttackConfig:
    d_in: int = 8
    d_out: int = 4
    rank: int = 2
    victim_lr: float = 0.1
    attacker_lr: float = 0.1
    attack_steps: int = 300
    restarts: int = 4
    fd_epsilon: float = 1e-5
    trials: int = 20
    rates: tuple = (0.0, 0.5, 0.7, 0.9)
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if not self.rates:
            raise ParameterError("need at least one prune rate")
        if any(not 0.0 <= p < 1.0 for p in self.rates):
            raise ParameterError(f"rates must lie in [0, 1): {self.rates}")
        if min(self.d_in, self.d_out, self.rank, self.attack_steps,
               self.restarts) < 1:
            raise ParameterError("victim dims, steps, restarts must be >= 1")
        if self.victim_lr <= 0 or self.attacker_lr <= 0:
            raise ParameterError("learning rates must be positive")


@dataclass(frozen=True)
class Victim:
    model: Model
    adapters: list
    lr: float


@dataclass
class ReconstructionResult:
    prune_rate: float
    mse: list
    cosine: list
    residual: list
    diverged: list

    def __post_init__(self):
        if any(m < 0 for m in self.mse):
            raise ParameterError("MSE cannot be negative")
        if any(not -1.0 <= c <= 1.0 for c in self.cosine):
            raise ParameterError("cosine similarity outside [-1, 1]")

    def median_mse(self) -> float:
        return float(np.median(self.mse))

    def iqr_mse(self) -> float:
        lo, hi = np.percentile(self.mse, [25, 75])
        return float(hi - lo)


@dataclass
class SweepResult:
    results: list
    medians: list = field(default_factory=list)
    iqrs: list = field(default_factory=list)
    monotone_extremes: bool = False


def make_victim(cfg: AttackConfig, seed: int) -> Victim:
    """Linear layer, warm adapter (A and B both Gaussian), trainable bias."""
    model = init_model([cfg.d_in, cfg.d_out], seed=seed)
    rng = np.random.default_rng(derive_seed(seed, 1))
    std = math.sqrt(1.0 / cfg.rank)
    adapter = LoraAdapter(
        layer_index=0,
        a=rng.normal(0.0, std, size=(cfg.d_in, cfg.rank)),
        b=rng.normal(0.0, std, size=(cfg.rank, cfg.d_out)),
        alpha=2.0 * cfg.rank)
    return Victim(model=model, adapters=[adapter], lr=cfg.victim_lr)


def sample_batch(cfg: AttackConfig, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(1, cfg.d_in))
    y = rng.normal(size=(1, cfg.d_out))
    return x, y


def victim_gradient_flat(victim: Victim, x: np.ndarray,
                         y: np.ndarray) -> np.ndarray:
    _, grads = backward(victim.model, victim.adapters, x, y, loss="mse",
                        train_bias=True)
    return np.concatenate([t.ravel()
                           for t in grads.d_a + grads.d_b + grads.d_bias])


def capture_update(victim: Victim, batch, p: float):
    """One SGD step on a single sample, masked exactly like the fed path.

    Returns (true input, pruned LoraUpdate). Update = -lr * gradient.
    """
    x, y = batch
    if x.shape[0] != 1:
        raise ParameterError("strongest-attack setting uses batch size 1")
    _, grads = backward(victim.model, victim.adapters, x, y, loss="mse",
                        train_bias=True)
    update = LoraUpdate(
        d_a=[-victim.lr * g for g in grads.d_a],
        d_b=[-victim.lr * g for g in grads.d_b],
        d_bias=[-victim.lr * g for g in grads.d_bias])
    pruned, _, _ = prune_update(update, p)
    return x, pruned


def _flat(update: LoraUpdate) -> np.ndarray:
    return np.concatenate([t.ravel() for t in update.tensors()])


def dlg_attack(observed: LoraUpdate, victim: Victim, targets: np.ndarray,
               cfg: AttackConfig, restart_seed: int = 0):
    """Gradient matching on the observed nonzero pattern.

    Minimizes sum(((g(dummy) - observed/-lr) * mask)^2) where the mask is
    the observed zero-pattern (the attacker cannot tell pruned zeros from
    true zeros). Backtracking halving keeps every accepted step a strict
    decrease; restart 0 starts at zero, later restarts at seeded Gaussians;
    the best residual wins. Returns (reconstructed input, residual,
    diverged flag).
    """
    obs_flat = _flat(observed)
    mask = (obs_flat != 0.0).astype(np.float64)
    if not mask.any():
        return np.zeros((1, cfg.d_in)), math.inf, True

    g_obs = (obs_flat / (-victim.lr)) * mask

    def match_loss(x_hat: np.ndarray) -> float:
        diff = victim_gradient_flat(victim, x_hat, targets) * mask - g_obs
        return float(np.sum(diff * diff))

    best_x, best_loss = None, math.inf
    for restart in range(cfg.restarts):
        if restart == 0:
            x_hat = np.zeros((1, cfg.d_in))
        else:
            rng = np.random.default_rng(
                derive_seed(restart_seed, _TAG_RESTART, restart))
            x_hat = rng.normal(size=(1, cfg.d_in))
        current = match_loss(x_hat)
        if not math.isfinite(current):
            continue
        eps = cfg.fd_epsilon
        for _ in range(cfg.attack_steps):
            grad = np.zeros(cfg.d_in)
            for i in range(cfg.d_in):
                probe = np.zeros((1, cfg.d_in))
                probe[0, i] = eps
                grad[i] = ((match_loss(x_hat + probe)
                            - match_loss(x_hat - probe)) / (2.0 * eps))
            step, moved = cfg.attacker_lr, False
            for _ in range(_MAX_HALVINGS):
                candidate = x_hat - step * grad
                cand_loss = match_loss(candidate)
                if math.isfinite(cand_loss) and cand_loss < current:
                    x_hat, current, moved = candidate, cand_loss, True
                    break
                step *= 0.5
            if not moved:
                break
        if current < best_loss:
            best_x, best_loss = x_hat, current
    if best_x is None:
        return np.zeros((1, cfg.d_in)), math.inf, True
    return best_x, best_loss, not math.isfinite(best_loss)


def reconstruction_metrics(x_true: np.ndarray, x_hat: np.ndarray):
    mse = float(np.mean((x_hat - x_true) ** 2))
    denom = np.linalg.norm(x_true) * np.linalg.norm(x_hat)
    if denom == 0.0:
        return mse, 0.0
    cos = float(np.dot(x_true.ravel(), x_hat.ravel()) / denom)
    return mse, min(1.0, max(-1.0, cos))


def run_trial(cfg: AttackConfig, p: float, trial: int):
    """-> (mse, cosine, residual, diverged); matched across rates."""
    victim = make_victim(cfg, derive_seed(cfg.seed, _TAG_VICTIM, trial))
    batch = sample_batch(cfg, derive_seed(cfg.seed, _TAG_BATCH, trial))
    x_true, observed = capture_update(victim, batch, p)
    x_hat, residual, diverged = dlg_attack(
        observed, victim, batch[1], cfg,
        restart_seed=derive_seed(cfg.seed, trial))
    mse, cos = reconstruction_metrics(x_true, x_hat)
    return mse, cos, residual, diverged


def sweep_prune_rates(cfg: AttackConfig) -> SweepResult:
    """Trials per rate with matched seeds; medians, IQRs, and the verdict
    that the last rate's median reconstruction error exceeds the first's."""
    results = []
    for p in cfg.rates:
        mses, cosines, residuals, diverged = [], [], [], []
        for trial in range(cfg.trials):
            mse, cos, res, div = run_trial(cfg, p, trial)
            mses.append(mse)
            cosines.append(cos)
            residuals.append(res)
            diverged.append(div)
        results.append(ReconstructionResult(
            prune_rate=p, mse=mses, cosine=cosines, residual=residuals,
            diverged=diverged))
    medians = [r.median_mse() for r in results]
    iqrs = [r.iqr_mse() for r in results]
    monotone = len(medians) < 2 or medians[-1] > medians[0]
    return SweepResult(results=results, medians=medians, iqrs=iqrs,
                       monotone_extremes=monotone)


def paired_sign_test(baseline, treated) -> float:
    """One-sided sign test p-value for H1: treated > baseline, ties dropped."""
    if len(baseline) != len(treated):
        raise ParameterError("sign test needs paired samples")
    wins = sum(1 for a, b in zip(baseline, treated) if b > a)
    n = sum(1 for a, b in zip(baseline, treated) if b != a)
    if n == 0:
        return 1.0
    tail = sum(math.comb(n, i) for i in range(wins, n + 1))
    return tail / 2.0 ** n
