"""The per-round state machine and the multi-round training driver.

Each round: select clients, sync the global adapters down, train locally,
prune by the scheduled rate, protect the update per mode (encrypt, nothing,
or DP noise), ship it over the in-process bus as serialized bytes, aggregate
server-side, decrypt through the key authority when encrypted, and apply the
mean to the global adapters exactly once.

The server holds the public key only; the SecretKey lives in KeyAuthority,
which hands back plaintext means and nothing else. Model evaluation uses an
orchestrator-owned validation set, never client data.
"""
from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..ckks.encode import decode
from ..ckks.keys import keygen
from ..ckks.ops import decrypt
from ..ckks.packing import concat_chunks, unpack_tensors
from ..errors import ConfigError, DivergenceError, StateError
from ..lora.checkpoint import save_adapters
from ..lora.data import make_blobs, make_planted_regression, split_pool
from ..lora.model import init_adapters, init_model
from ..lora.train import apply_update, backward, local_train
from ..pruning import product_prune_update, prune_update, schedule_rate
from .aggregate import (aggregate_encrypted, aggregate_plain,
                        data_size_weights, dp_privatize, select_clients)
from .config import RunConfig
from .messages import (derive_seed, deserialize_message,
                       make_encrypted_message, make_plain_message,
                       plain_update_from_message, serialize_message,
                       tensors_to_update)
from .metrics import MetricsWriter, RoundRecord, zero_timings

_TAG_MODEL = 1
_TAG_ADAPTERS = 2
_TAG_DATA = 3
_TAG_SPLIT = 4
_TAG_KEYS = 5
_TAG_ENCRYPT = 21
_TAG_DP = 22


@dataclass
class ClientState:
    client_id: int
    dataset: object
    adapters: list | None = None


@dataclass
class ServerState:
    """Aggregator view: global adapters and the public key, nothing secret."""

    adapters: list
    public_key: object = None
    round_index: int = 0
    message_log: list = field(default_factory=list)


class KeyAuthority:
    """Holds the SecretKey; decrypts aggregated ciphertexts only."""

    def __init__(self, params, seed: int):
        sk, pk = keygen(params, seed)
        self._secret = sk
        self.public_key = pk
        self.params = params

    def decrypt_flat(self, cts) -> np.ndarray:
        chunks = [decode(decrypt(ct, self._secret)) for ct in cts]
        return concat_chunks(chunks)


@dataclass
class RunContext:
    config: RunConfig
    model: object
    clients: list
    server: ServerState
    authority: KeyAuthority | None
    val_set: object


@dataclass
class RunMetrics:
    records: list
    final_adapters: list
    snapshots: list | None = None
    failed: bool = False
    error: str | None = None


def build_model(config: RunConfig):
    """Seeded base model per config; hidden layers use the configured
    activation, the output layer is always identity."""
    sizes = config.layer_sizes()
    acts = [config["model.activation"]] * (len(sizes) - 2) + ["identity"]
    return init_model(sizes, activations=acts,
                      seed=derive_seed(config["run.seed"], _TAG_MODEL))


def build_pool(config: RunConfig, model, pool_n: int):
    """One seeded dataset pool of pool_n samples for the configured task."""
    data_seed = derive_seed(config["run.seed"], _TAG_DATA)
    if config["data.task"] == "regression":
        return make_planted_regression(
            model, pool_n, seed=data_seed,
            planted_rank=config["data.planted_rank"],
            delta_scale=config["data.delta_scale"],
            noise_std=config["data.noise_std"])
    return make_blobs(pool_n, config["data.d_in"],
                      n_classes=config["data.d_out"], seed=data_seed)


def init_run(config: RunConfig) -> RunContext:
    config.validate()
    seed = config["run.seed"]
    model = build_model(config)
    adapters = init_adapters(model, config["model.rank"],
                             alpha=config.adapter_alpha(),
                             seed=derive_seed(seed, _TAG_ADAPTERS))
    n_clients = config["run.n_clients"]
    pool_n = (n_clients * config["data.samples_per_client"]
              + config["data.val_samples"])
    pool = build_pool(config, model, pool_n)
    n_val = config["data.val_samples"]
    val_set = pool.subset(np.arange(n_val))
    shards = split_pool(pool.subset(np.arange(n_val, pool.n)), n_clients,
                        seed=derive_seed(seed, _TAG_SPLIT))
    clients = [ClientState(client_id=i, dataset=ds)
               for i, ds in enumerate(shards)]
    authority = None
    public_key = None
    if config["run.mode"] == "fedshield":
        if (config["train.weighting"] == "data_size"
                and len({c.dataset.n for c in clients}) > 1):
            raise ConfigError(
                "encrypted aggregation supports uniform weighting only;"
                " data_size weighting needs equal shards")
        authority = KeyAuthority(config.ckks_params(),
                                 seed=derive_seed(seed, _TAG_KEYS))
        public_key = authority.public_key
    server = ServerState(adapters=adapters, public_key=public_key)
    return RunContext(config=config, model=model, clients=clients,
                      server=server, authority=authority, val_set=val_set)


def _train_loss_name(config: RunConfig, dataset) -> str:
    name = config.loss_name()
    if name is not None:
        return name
    return "mse" if dataset.task == "regression" else "cross_entropy"


def _client_phase(ctx: RunContext, cid: int, t: int, p_t: float):
    """Sync, train, prune, protect, serialize. Returns the wire bytes plus
    the local loss history and pruning error for metrics."""
    config = ctx.config
    client = ctx.clients[cid]
    client.adapters = [ad.copy() for ad in ctx.server.adapters]
    t0 = time.perf_counter()
    update, losses = local_train(
        ctx.model, client.adapters, client.dataset,
        epochs=config["train.local_epochs"], lr=config["train.lr"],
        optimizer=config["train.optimizer"],
        loss=config.loss_name())
    update.round_index = t
    update.client_id = cid
    if config["prune.enabled"]:
        if config["prune.granularity"] == "product":
            pruned, prune_err = product_prune_update(client.adapters,
                                                     update, p_t)
        else:
            pruned, _, prune_err = prune_update(update, p_t)
    else:
        pruned, prune_err = update, 0.0
    train_s = time.perf_counter() - t0
    seed = config["run.seed"]
    t0 = time.perf_counter()
    mode = config["run.mode"]
    if mode == "fedshield":
        msg = make_encrypted_message(pruned, ctx.server.public_key,
                                     derive_seed(seed, _TAG_ENCRYPT, t, cid))
    elif mode == "dp_lora":
        noised = dp_privatize(pruned, config["dp.clip"], config["dp.noise"],
                              derive_seed(seed, _TAG_DP, t, cid))
        msg = make_plain_message(noised)
    else:
        msg = make_plain_message(pruned)
    encrypt_s = time.perf_counter() - t0
    return serialize_message(msg), losses, prune_err, train_s, encrypt_s


def run_round(ctx: RunContext, t: int) -> RoundRecord:
    config = ctx.config
    mode = config["run.mode"]
    seed = config["run.seed"]
    selected = select_clients(config["run.n_clients"],
                              config["run.clients_per_round"], t, seed)
    if t == config["run.dropout_round"]:
        selected = [c for c in selected
                    if c != config["run.dropout_client"]]
        if not selected:
            raise StateError(f"every selected client dropped in round {t}")
    p_t = (schedule_rate(config.prune_schedule(), t)
           if config["prune.enabled"] else 0.0)

    wire = []
    client_losses, prune_errs = [], []
    train_s = encrypt_s = 0.0
    for cid in selected:
        data, losses, perr, tr_s, en_s = _client_phase(ctx, cid, t, p_t)
        wire.append(data)
        client_losses.append([cid, losses[-1]])
        prune_errs.append([cid, perr])
        train_s += tr_s
        encrypt_s += en_s

    ctx.server.message_log.extend(wire)
    msgs = sorted((deserialize_message(data) for data in wire),
                  key=lambda m: m.client_id)
    decrypt_s = 0.0
    if mode == "fedshield":
        t0 = time.perf_counter()
        cts = aggregate_encrypted(msgs, ctx.authority.params)
        aggregate_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        flat = ctx.authority.decrypt_flat(cts)
        decrypt_s = time.perf_counter() - t0
        tensors = unpack_tensors(flat, msgs[0].descriptor)
        agg = tensors_to_update(tensors, msgs[0].n_a, msgs[0].n_b,
                                msgs[0].n_bias, round_index=t)
    else:
        updates = [plain_update_from_message(m) for m in msgs]
        weights = None
        if config["train.weighting"] == "data_size":
            weights = data_size_weights(
                [ctx.clients[m.client_id].dataset.n for m in msgs])
        t0 = time.perf_counter()
        agg = aggregate_plain(updates, weights)
        aggregate_s = time.perf_counter() - t0

    ctx.server.adapters = apply_update(ctx.server.adapters, agg, scale=1.0)
    ctx.server.round_index = t

    val = ctx.val_set
    val_loss, val_grads = backward(ctx.model, ctx.server.adapters,
                                   val.inputs, val.targets,
                                   loss=_train_loss_name(config, val))
    grad_norm_sq = sum(float(np.sum(g ** 2))
                       for g in val_grads.d_a + val_grads.d_b)

    timings = {"train": train_s, "encrypt": encrypt_s,
               "aggregate": aggregate_s, "decrypt": decrypt_s}
    return RoundRecord(
        round_index=t, mode=mode, p_t=p_t, selected=selected,
        client_losses=client_losses, prune_error_norms=prune_errs,
        update_norm=agg.norm(), val_loss=val_loss,
        grad_norm_sq=grad_norm_sq,
        timings=timings if config["run.record_timings"]
        else zero_timings())


def _flatten_adapters(adapters) -> np.ndarray:
    return np.concatenate([t.ravel()
                           for ad in adapters for t in (ad.a, ad.b)])


def run_training(config: RunConfig, out_dir=None, metrics_path=None,
                 snapshot_adapters: bool = False) -> RunMetrics:
    """Run config rounds; checkpoint periodically; flush partial metrics on
    divergence instead of losing the run."""
    ctx = init_run(config)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    writer = (MetricsWriter(metrics_path, config.resolved(), __version__)
              if metrics_path is not None else None)
    records, snaps = [], []
    failed, error = False, None
    every = config["run.checkpoint_every"]
    rounds = config["run.rounds"]
    try:
        for t in range(1, rounds + 1):
            record = run_round(ctx, t)
            records.append(record)
            if writer is not None:
                writer.write_record(record)
            if snapshot_adapters:
                snaps.append(_flatten_adapters(ctx.server.adapters))
            if out_dir is not None and (t % every == 0 or t == rounds):
                save_adapters(os.path.join(out_dir, f"ckpt_round_{t}"),
                              ctx.server.adapters)
    except DivergenceError as exc:
        failed, error = True, str(exc)
    finally:
        if writer is not None:
            writer.close()
    return RunMetrics(records=records, final_adapters=ctx.server.adapters,
                      snapshots=snaps if snapshot_adapters else None,
                      failed=failed, error=error)
