"""Low-rank adapter training on a frozen dense base."""
from .checkpoint import (
    adapters_from_bytes,
    adapters_to_bytes,
    load_adapters,
    save_adapters,
)
from .data import (
    ToyDataset,
    client_file_name,
    load_client_dataset,
    make_blobs,
    make_planted_regression,
    planted_delta,
    save_client_dataset,
    split_pool,
)
from .model import (
    DenseLayer,
    LoraAdapter,
    Model,
    adapter_param_count,
    base_param_count,
    forward,
    forward_trace,
    init_adapters,
    init_model,
    merge_adapters,
)
from .train import (
    Adam,
    GradientSet,
    LoraUpdate,
    Sgd,
    apply_update,
    backward,
    cross_entropy_loss,
    local_train,
    make_optimizer,
    mse_loss,
    zeros_like_update,
)

__all__ = [
    "Adam",
    "DenseLayer",
    "GradientSet",
    "LoraAdapter",
    "LoraUpdate",
    "Model",
    "Sgd",
    "ToyDataset",
    "adapter_param_count",
    "adapters_from_bytes",
    "adapters_to_bytes",
    "apply_update",
    "backward",
    "base_param_count",
    "client_file_name",
    "cross_entropy_loss",
    "forward",
    "forward_trace",
    "init_adapters",
    "init_model",
    "load_adapters",
    "load_client_dataset",
    "local_train",
    "make_blobs",
    "make_optimizer",
    "make_planted_regression",
    "merge_adapters",
    "mse_loss",
    "planted_delta",
    "save_adapters",
    "save_client_dataset",
    "split_pool",
    "zeros_like_update",
]
