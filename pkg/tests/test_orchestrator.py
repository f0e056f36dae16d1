"""Round state machine tests: sync, modes, dropout, blindness, determinism."""
import os

import numpy as np
import pytest

from fedshield.ckks.keys import SecretKey
from fedshield.errors import StateError
from fedshield.fed.config import load_config
from fedshield.fed.orchestrator import (_flatten_adapters, init_run,
                                        run_round, run_training)
from fedshield.fed.metrics import read_metrics, zero_timings
from fedshield.lora.checkpoint import load_adapters
from fedshield.lora.train import local_train
from fedshield.pruning import prune_update, schedule_rate

FAST_CKKS = ["ckks.poly_degree=64", "ckks.modulus_bits=60,40,60"]


def fast_config(*extra):
    return load_config(overrides=[
        "run.rounds=3", "train.lr=0.05", "train.optimizer=adam",
        *FAST_CKKS, *extra])


def test_lr_zero_leaves_global_adapters_unchanged():
    cfg = fast_config("run.mode=vanilla", "run.n_clients=1",
                      "run.clients_per_round=1", "train.lr=0",
                      "run.rounds=1")
    ctx = init_run(cfg)
    before = _flatten_adapters(ctx.server.adapters)
    run_round(ctx, 1)
    after = _flatten_adapters(ctx.server.adapters)
    assert np.array_equal(before, after)


def test_single_round_equals_run_training():
    cfg = fast_config("run.mode=vanilla", "run.rounds=1")
    manual = run_round(init_run(cfg), 1)
    driven = run_training(cfg)
    assert len(driven.records) == 1
    assert driven.records[0].to_dict() == manual.to_dict()


def test_global_adapters_advance_once_per_round():
    cfg = fast_config("run.mode=vanilla")
    ctx = init_run(cfg)
    seen = [_flatten_adapters(ctx.server.adapters)]
    for t in (1, 2, 3):
        run_round(ctx, t)
        seen.append(_flatten_adapters(ctx.server.adapters))
        assert ctx.server.round_index == t
    for a, b in zip(seen, seen[1:]):
        assert not np.array_equal(a, b)


def test_fedshield_tracks_plain_control():
    shared = ["run.rounds=10", "train.lr=0.05", "train.optimizer=adam",
              *FAST_CKKS]
    plain = run_training(load_config(overrides=shared + ["run.mode=vanilla"]),
                         snapshot_adapters=True)
    enc = run_training(load_config(overrides=shared + ["run.mode=fedshield"]),
                       snapshot_adapters=True)
    for a, b in zip(plain.snapshots, enc.snapshots):
        assert np.max(np.abs(a - b)) < 1e-3


def test_round_record_contents():
    cfg = fast_config("run.mode=fedshield")
    ctx = init_run(cfg)
    rec = run_round(ctx, 1)
    sched = cfg.prune_schedule()
    assert rec.round_index == 1 and rec.mode == "fedshield"
    assert rec.p_t == schedule_rate(sched, 1)
    assert rec.selected == [0, 1, 2]
    assert [cid for cid, _ in rec.client_losses] == [0, 1, 2]
    assert all(norm > 0 for _, norm in rec.prune_error_norms)
    assert rec.update_norm > 0
    assert np.isfinite(rec.val_loss) and np.isfinite(rec.grad_norm_sq)
    assert rec.timings == zero_timings()  # timings off by default


def test_timings_recorded_when_enabled():
    cfg = fast_config("run.mode=fedshield", "run.record_timings=true",
                      "run.rounds=1")
    rec = run_round(init_run(cfg), 1)
    assert rec.timings["train"] > 0
    assert rec.timings["encrypt"] > 0
    assert rec.timings["decrypt"] > 0


def test_pruning_disabled_sets_rate_zero():
    cfg = fast_config("run.mode=vanilla", "prune.enabled=false",
                      "run.rounds=1")
    rec = run_round(init_run(cfg), 1)
    assert rec.p_t == 0.0
    assert all(norm == 0.0 for _, norm in rec.prune_error_norms)


def test_dropout_renormalizes_over_survivors():
    cfg = fast_config("run.mode=vanilla", "run.dropout_round=2",
                      "run.dropout_client=1")
    metrics = run_training(cfg)
    assert metrics.records[1].selected == [0, 2]
    assert len(metrics.records[1].client_losses) == 2
    assert metrics.records[0].selected == [0, 1, 2]
    assert not metrics.failed


def test_dropout_of_every_client_errors():
    cfg = fast_config("run.mode=vanilla", "run.n_clients=1",
                      "run.clients_per_round=1", "run.dropout_round=1",
                      "run.dropout_client=0")
    with pytest.raises(StateError):
        run_round(init_run(cfg), 1)


def test_loss_decreases_on_planted_task():
    cfg = load_config(overrides=[
        "run.mode=vanilla", "run.rounds=40", "train.lr=0.05",
        "train.optimizer=adam"])
    metrics = run_training(cfg)
    assert metrics.records[-1].val_loss < 0.2 * metrics.records[0].val_loss


def test_schedule_saturates_in_records():
    cfg = load_config(overrides=[
        "run.mode=vanilla", "run.rounds=200", "train.lr=0.01",
        "train.optimizer=sgd"])
    metrics = run_training(cfg)
    assert metrics.records[-1].round_index == 200
    assert metrics.records[-1].p_t == 0.5
    assert metrics.records[99].p_t == pytest.approx(0.35, abs=1e-9)


def test_checkpoints_written_and_loadable(tmp_path):
    cfg = fast_config("run.mode=vanilla", "run.rounds=12",
                      "run.checkpoint_every=10")
    metrics = run_training(cfg, out_dir=tmp_path)
    assert (tmp_path / "ckpt_round_10").exists()
    final = load_adapters(tmp_path / "ckpt_round_12")
    assert np.array_equal(_flatten_adapters(final),
                          _flatten_adapters(metrics.final_adapters))


def test_metrics_files_byte_identical(tmp_path):
    for mode in ("vanilla", "fedshield"):
        paths = []
        for i in range(2):
            path = tmp_path / f"{mode}_{i}.jsonl"
            run_training(fast_config(f"run.mode={mode}"), metrics_path=path)
            paths.append(path.read_bytes())
        assert paths[0] == paths[1]


def test_metrics_file_contents(tmp_path):
    path = tmp_path / "run.jsonl"
    cfg = fast_config("run.mode=vanilla", "run.rounds=4")
    run_training(cfg, metrics_path=path)
    header, records = read_metrics(path)
    assert header["config"] == cfg.resolved()
    assert [r.round_index for r in records] == [1, 2, 3, 4]


def test_data_size_weighting_matches_uniform_on_equal_shards(tmp_path):
    a = tmp_path / "u.jsonl"
    b = tmp_path / "d.jsonl"
    run_training(fast_config("run.mode=vanilla",
                             "train.weighting=uniform"), metrics_path=a)
    run_training(fast_config("run.mode=vanilla",
                             "train.weighting=data_size"), metrics_path=b)
    ha, ra = read_metrics(a)
    hb, rb = read_metrics(b)
    assert [r.val_loss for r in ra] == [r.val_loss for r in rb]


def test_classification_task_runs():
    cfg = fast_config("run.mode=vanilla", "data.task=blobs",
                      "model.hidden=8", "train.lr=0.1")
    metrics = run_training(cfg)
    assert all(np.isfinite(r.val_loss) for r in metrics.records)
    assert metrics.records[-1].val_loss < metrics.records[0].val_loss


def test_product_granularity_round():
    cfg = fast_config("run.mode=fedshield", "prune.granularity=product",
                      "run.rounds=2")
    metrics = run_training(cfg)
    assert not metrics.failed
    assert all(norm > 0 for _, norm in
               metrics.records[0].prune_error_norms)


def test_dp_mode_runs_and_differs_from_vanilla():
    dp = run_training(fast_config("run.mode=dp_lora"),
                      snapshot_adapters=True)
    plain = run_training(fast_config("run.mode=vanilla"),
                         snapshot_adapters=True)
    assert not dp.failed
    assert not np.array_equal(dp.snapshots[0], plain.snapshots[0])


def test_server_state_holds_no_secrets_or_data():
    ctx = init_run(fast_config("run.mode=fedshield"))
    run_round(ctx, 1)
    for value in vars(ctx.server).values():
        assert not isinstance(value, SecretKey)
    assert not hasattr(ctx.server, "dataset")
    assert not hasattr(ctx.server.public_key, "s_ntt")
    # the authority is a distinct actor holding the key
    assert isinstance(ctx.authority._secret, SecretKey)


def test_server_never_sees_plaintext_update_bytes():
    """Replays each client's deterministic local step to learn the exact
    pruned tensors, then scans everything the server received."""
    for mode, expect_visible in (("vanilla", True), ("fedshield", False)):
        cfg = fast_config(f"run.mode={mode}", "run.rounds=1")
        ctx = init_run(cfg)
        start = [ad.copy() for ad in ctx.server.adapters]
        rec = run_round(ctx, 1)
        log = b"".join(ctx.server.message_log)
        for cid in rec.selected:
            update, _ = local_train(
                ctx.model, [ad.copy() for ad in start],
                ctx.clients[cid].dataset,
                epochs=cfg["train.local_epochs"], lr=cfg["train.lr"],
                optimizer=cfg["train.optimizer"])
            pruned, _, _ = prune_update(update, rec.p_t)
            for tensor in pruned.tensors():
                assert (tensor.tobytes() in log) == expect_visible


def test_fedshield_deterministic_across_runs():
    runs = [run_training(fast_config("run.mode=fedshield"),
                         snapshot_adapters=True) for _ in range(2)]
    for a, b in zip(runs[0].snapshots, runs[1].snapshots):
        assert np.array_equal(a, b)
