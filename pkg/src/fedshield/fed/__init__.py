"""Federated orchestration: config, messages, aggregation, rounds, metrics."""
from .aggregate import (aggregate_encrypted, aggregate_plain,
                        data_size_weights, dp_privatize, select_clients)
from .config import DEFAULTS, RunConfig, load_config
from .messages import (UpdateMessage, derive_seed, deserialize_message,
                       make_encrypted_message, make_plain_message,
                       plain_update_from_message, serialize_message,
                       tensors_to_update)
from .metrics import MetricsWriter, RoundRecord, read_metrics, zero_timings
from .orchestrator import (ClientState, KeyAuthority, RunContext, RunMetrics,
                           ServerState, build_model, build_pool, init_run,
                           run_round, run_training)

__all__ = [
    "DEFAULTS", "RunConfig", "load_config",
    "UpdateMessage", "derive_seed", "deserialize_message",
    "make_encrypted_message", "make_plain_message",
    "plain_update_from_message", "serialize_message", "tensors_to_update",
    "aggregate_encrypted", "aggregate_plain", "data_size_weights",
    "dp_privatize", "select_clients",
    "MetricsWriter", "RoundRecord", "read_metrics", "zero_timings",
    "ClientState", "KeyAuthority", "RunContext", "RunMetrics", "ServerState",
    "build_model", "build_pool", "init_run", "run_round", "run_training",
]
