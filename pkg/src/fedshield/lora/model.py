"""Dense base model with low-rank adapters.

The base network is a small stack of dense layers with frozen weights; each
layer carries a trainable low-rank pair (A, B) contributing
(alpha/r) * (A @ B)^T alongside the frozen weight. Only A and B (and
optionally the bias, for attack victims) ever receive gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ParameterError, StateError

_ACTIVATIONS = ("identity", "relu", "tanh")


@dataclass
class DenseLayer:
    weight: np.ndarray  # (d_out, d_in), frozen
    bias: np.ndarray    # (d_out,), frozen
    activation: str = "identity"

    @property
    def d_in(self) -> int:
        return self.weight.shape[1]

    @property
    def d_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class Model:
    layers: list[DenseLayer]
    merged: bool = False

    @property
    def layer_sizes(self) -> list[int]:
        return [self.layers[0].d_in] + [l.d_out for l in self.layers]


@dataclass
class LoraAdapter:
    layer_index: int
    a: np.ndarray  # (d_in, r)
    b: np.ndarray  # (r, d_out)
    alpha: float

    @property
    def rank(self) -> int:
        return self.a.shape[1]

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def delta_weight(self) -> np.ndarray:
        """Effective additive weight, (d_out, d_in)."""
        return self.scaling * (self.a @ self.b).T

    def copy(self) -> "LoraAdapter":
        return LoraAdapter(layer_index=self.layer_index, a=self.a.copy(),
                           b=self.b.copy(), alpha=self.alpha)


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "identity":
        return x
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "tanh":
        return np.tanh(x)
    raise ParameterError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - post ** 2
    raise ParameterError(f"unknown activation {name!r}")


def init_model(layer_sizes, activations=None, seed: int = 0) -> Model:
    """Frozen Gaussian base: W ~ N(0, 1/d_in), zero bias."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ParameterError(f"bad layer sizes {sizes}")
    n_layers = len(sizes) - 1
    if activations is None:
        activations = ["tanh"] * (n_layers - 1) + ["identity"]
    if len(activations) != n_layers:
        raise ParameterError("one activation per layer required")
    for a in activations:
        if a not in _ACTIVATIONS:
            raise ParameterError(f"unknown activation {a!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(n_layers):
        d_in, d_out = sizes[i], sizes[i + 1]
        w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in))
        b = np.zeros(d_out)
        w.setflags(write=False)
        b.setflags(write=False)
        layers.append(DenseLayer(weight=w, bias=b, activation=activations[i]))
    return Model(layers=layers)


def init_adapters(model: Model, rank, alpha: float = None,
                  seed: int = 0) -> list[LoraAdapter]:
    """A ~ N(0, 1/r), B = 0, one adapter per layer.

    rank may be an int (same for all layers) or a per-layer list.
    alpha defaults to 2*r per layer.
    """
    n_layers = len(model.layers)
    ranks = [rank] * n_layers if np.isscalar(rank) else list(rank)
    if len(ranks) != n_layers:
        raise ParameterError("one rank per layer required")
    rng = np.random.default_rng(seed)
    adapters = []
    for i, (layer, r) in enumerate(zip(model.layers, ranks)):
        r = int(r)
        if not 0 < r <= min(layer.d_in, layer.d_out):
            raise ParameterError(
                f"rank {r} invalid for layer {i} of shape"
                f" ({layer.d_in}, {layer.d_out})")
        a = rng.normal(0.0, np.sqrt(1.0 / r), size=(layer.d_in, r))
        b = np.zeros((r, layer.d_out))
        adapters.append(LoraAdapter(
            layer_index=i, a=a, b=b,
            alpha=float(alpha) if alpha is not None else 2.0 * r))
    return adapters


def forward(model: Model, adapters, x: np.ndarray) -> np.ndarray:
    """Batched forward pass; adapters may be None for the bare base."""
    out, _ = forward_trace(model, adapters, x)
    return out


def forward_trace(model: Model, adapters, x: np.ndarray):
    """Forward pass keeping per-layer inputs and preactivations."""
    h = np.asarray(x, dtype=np.float64)
    if h.ndim == 1:
        h = h[None, :]
    if h.shape[1] != model.layers[0].d_in:
        raise ParameterError(
            f"input width {h.shape[1]} != layer width"
            f" {model.layers[0].d_in}")
    if adapters is not None and len(adapters) != len(model.layers):
        raise ParameterError("one adapter per layer required")
    trace = []
    for i, layer in enumerate(model.layers):
        pre = h @ layer.weight.T + layer.bias
        if adapters is not None:
            ad = adapters[i]
            pre = pre + ad.scaling * ((h @ ad.a) @ ad.b)
        post = _act(layer.activation, pre)
        trace.append((h, pre, post))
        h = post
    return h, trace


def merge_adapters(model: Model, adapters) -> Model:
    """Fold adapters into the base: W' = W + (alpha/r) (A @ B)^T."""
    if model.merged:
        raise StateError("adapters already merged into this model")
    layers = []
    for layer, ad in zip(model.layers, adapters):
        w = layer.weight + ad.delta_weight()
        w.setflags(write=False)
        layers.append(DenseLayer(weight=w, bias=layer.bias,
                                 activation=layer.activation))
    return Model(layers=layers, merged=True)


def adapter_param_count(adapters) -> int:
    """Trainable parameter count: sum of r * (d_in + d_out)."""
    return sum(ad.a.size + ad.b.size for ad in adapters)


def base_param_count(model: Model) -> int:
    return sum(l.weight.size for l in model.layers)
