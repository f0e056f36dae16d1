"""Hand-written backprop for the adapter factors, plus local training.

Gradients flow only into A and B (and optionally the bias for attack
victims); base weights stay frozen. Losses: mean squared error over all
output entries, or softmax cross-entropy over integer labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, ParameterError
from .model import LoraAdapter, Model, _act_grad, forward_trace

_DIVERGENCE_CAP = 1.0e6


@dataclass
class GradientSet:
    d_a: list
    d_b: list
    d_bias: list | None = None


@dataclass
class LoraUpdate:
    """Additive deltas for every adapter factor; the unit the wire carries."""

    d_a: list
    d_b: list
    d_bias: list | None = None
    round_index: int = -1
    client_id: int = -1

    def named_tensors(self):
        for i, t in enumerate(self.d_a):
            yield f"layer{i}.A", t
        for i, t in enumerate(self.d_b):
            yield f"layer{i}.B", t
        if self.d_bias is not None:
            for i, t in enumerate(self.d_bias):
                yield f"layer{i}.bias", t

    def tensors(self):
        return [t for _, t in self.named_tensors()]

    def norm(self) -> float:
        return math.sqrt(sum(float(np.sum(t ** 2)) for t in self.tensors()))

    def copy(self) -> "LoraUpdate":
        return LoraUpdate(
            d_a=[t.copy() for t in self.d_a],
            d_b=[t.copy() for t in self.d_b],
            d_bias=None if self.d_bias is None
            else [t.copy() for t in self.d_bias],
            round_index=self.round_index,
            client_id=self.client_id,
        )

    def map(self, fn) -> "LoraUpdate":
        return LoraUpdate(
            d_a=[fn(t) for t in self.d_a],
            d_b=[fn(t) for t in self.d_b],
            d_bias=None if self.d_bias is None
            else [fn(t) for t in self.d_bias],
            round_index=self.round_index,
            client_id=self.client_id,
        )


def mse_loss(pred: np.ndarray, targets: np.ndarray):
    diff = pred - targets
    loss = float(np.mean(diff ** 2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ParameterError("cross entropy expects integer label vector")
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


_LOSSES = {"mse": mse_loss, "cross_entropy": cross_entropy_loss}


def backward(model: Model, adapters, inputs, targets, loss: str = "mse",
             train_bias: bool = False):
    """-> (loss value, GradientSet). Base weights receive no gradient."""
    if loss not in _LOSSES:
        raise ParameterError(f"unknown loss {loss!r}")
    out, trace = forward_trace(model, adapters, inputs)
    if loss == "mse":
        targets = np.asarray(targets, dtype=np.float64)
        if targets.ndim == 1:
            targets = targets[None, :]
        if targets.shape != out.shape:
            raise ParameterError(
                f"target shape {targets.shape} != output {out.shape}")
    loss_val, d_out = _LOSSES[loss](out, targets)
    d_a = [None] * len(model.layers)
    d_b = [None] * len(model.layers)
    d_bias = [None] * len(model.layers)
    grad = d_out
    for i in reversed(range(len(model.layers))):
        layer = model.layers[i]
        h_in, pre, post = trace[i]
        d_pre = grad * _act_grad(layer.activation, pre, post)
        ad = adapters[i]
        s = ad.scaling
        d_a[i] = s * (h_in.T @ (d_pre @ ad.b.T))
        d_b[i] = s * ((h_in @ ad.a).T @ d_pre)
        if train_bias:
            d_bias[i] = d_pre.sum(axis=0)
        if i:
            grad = d_pre @ layer.weight + s * ((d_pre @ ad.b.T) @ ad.a.T)
    return loss_val, GradientSet(
        d_a=d_a, d_b=d_b, d_bias=d_bias if train_bias else None)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, tensors, grads):
        for t, g in zip(tensors, grads):
            t -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, tensors, grads):
        if self.m is None:
            self.m = [np.zeros_like(t) for t in tensors]
            self.v = [np.zeros_like(t) for t in tensors]
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for t, g, m, v in zip(tensors, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g ** 2
            t -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "sgd":
        return Sgd(lr)
    if name == "adam":
        return Adam(lr)
    raise ParameterError(f"unknown optimizer {name!r}")


def local_train(model: Model, adapters, dataset, epochs: int, lr: float,
                optimizer: str = "adam", loss: str = None):
    """Full-batch local training; one optimizer step per epoch.

    Returns (LoraUpdate, per-epoch pre-step losses). The caller's adapters
    are not modified; the update holds trained-minus-initial deltas.
    """
    if epochs < 1:
        raise ParameterError("epochs must be >= 1")
    if loss is None:
        loss = "mse" if dataset.task == "regression" else "cross_entropy"
    work = [ad.copy() for ad in adapters]
    trainables = [t for ad in work for t in (ad.a, ad.b)]
    opt = make_optimizer(optimizer, lr)
    losses = []
    for _ in range(epochs):
        loss_val, grads = backward(model, work, dataset.inputs,
                                   dataset.targets, loss=loss)
        if not math.isfinite(loss_val) or loss_val > _DIVERGENCE_CAP:
            raise DivergenceError(
                f"training loss {loss_val} exceeded cap", history=losses)
        losses.append(loss_val)
        flat_grads = [g for ga, gb in zip(grads.d_a, grads.d_b)
                      for g in (ga, gb)]
        opt.step(trainables, flat_grads)
    update = LoraUpdate(
        d_a=[w.a - ad.a for w, ad in zip(work, adapters)],
        d_b=[w.b - ad.b for w, ad in zip(work, adapters)],
    )
    return update, losses


def apply_update(adapters, update: LoraUpdate, scale: float = 1.0):
    """Return new adapters with A += scale * dA, B += scale * dB."""
    if update.d_bias is not None:
        raise ParameterError(
            "bias deltas cannot be applied to adapter-only state")
    if len(update.d_a) != len(adapters) or len(update.d_b) != len(adapters):
        raise ParameterError("update layer count does not match adapters")
    out = []
    for ad, da, db in zip(adapters, update.d_a, update.d_b):
        if da.shape != ad.a.shape or db.shape != ad.b.shape:
            raise ParameterError(
                f"update shapes {da.shape}/{db.shape} do not match adapter"
                f" {ad.a.shape}/{ad.b.shape}")
        out.append(LoraAdapter(layer_index=ad.layer_index,
                               a=ad.a + scale * da,
                               b=ad.b + scale * db,
                               alpha=ad.alpha))
    return out


def zeros_like_update(adapters, round_index: int = -1,
                      client_id: int = -1) -> LoraUpdate:
    return LoraUpdate(
        d_a=[np.zeros_like(ad.a) for ad in adapters],
        d_b=[np.zeros_like(ad.b) for ad in adapters],
        round_index=round_index,
        client_id=client_id,
    )
