"""CLI behavior: exit codes, file outputs, and the config round-trip."""
import json
import subprocess
import sys

import numpy as np
import pytest

from fedshield.cli import main
from fedshield.lora.data import load_client_dataset

FAST = ["ckks.poly_degree=64", "train.lr=0.05"]


def run_cli(*argv):
    return main(list(argv))


def test_unknown_verb_and_missing_verb_exit_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("frobnicate")
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        run_cli()
    assert exc.value.code != 0
    capsys.readouterr()


def test_bad_override_exits_nonzero(capsys):
    assert run_cli("train", "--rounds", "1", "no.such.key=1") == 1
    assert run_cli("train", "--rounds", "1", "malformed") == 1
    err = capsys.readouterr().err
    assert "error:" in err


def test_invalid_log_level_exits_nonzero(monkeypatch, capsys):
    monkeypatch.setenv("FEDSHIELD_LOG", "loud")
    assert run_cli("bench-fhe", "--vector-len", "0") == 1
    assert "FEDSHIELD_LOG" in capsys.readouterr().err


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
    capsys.readouterr()


def test_console_script_is_wired():
    proc = subprocess.run([sys.executable, "-m", "fedshield.cli",
                           "bench-fhe", "--vector-len", "0"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "n_c=0" in proc.stdout


def test_train_writes_metrics_and_losses(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli("train", "--mode", "vanilla", "--rounds", "4",
                   "--out", str(out), *FAST) == 0
    capsys.readouterr()
    lines = (out / "metrics.jsonl").read_text().splitlines()
    header, records = json.loads(lines[0]), lines[1:]
    assert len(records) == 4
    assert header["config"]["run.rounds"] == 4
    assert header["config"]["run.mode"] == "vanilla"
    csv_lines = (out / "client_losses.csv").read_text().splitlines()
    assert csv_lines[0] == "round,mode,client_id,train_loss,val_loss"
    assert len(csv_lines) == 1 + 4 * 3  # header + rounds * clients
    assert (out / "ckpt_round_4").exists()


def test_train_rerun_is_bit_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("train", "--mode", "vanilla", "--rounds", "3",
                       "--seed", "7", "--out", str(out), *FAST) == 0
        outs.append((out / "metrics.jsonl").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_config_header_round_trips(tmp_path, capsys):
    first = tmp_path / "first"
    assert run_cli("train", "--mode", "vanilla", "--rounds", "3",
                   "--out", str(first), *FAST) == 0
    header_line = (first / "metrics.jsonl").read_text().splitlines()[0]
    cfg_path = tmp_path / "replay.json"
    cfg_path.write_text(header_line)
    second = tmp_path / "second"
    assert run_cli("train", "--config", str(cfg_path),
                   "--out", str(second)) == 0
    capsys.readouterr()
    assert ((first / "metrics.jsonl").read_bytes()
            == (second / "metrics.jsonl").read_bytes())


def test_verify_passes_on_default_small_config(capsys):
    assert run_cli("verify", "--rounds", "4", *FAST) == 0
    out = capsys.readouterr().out
    assert "PASS" in out
    assert "max per-round adapter deviation" in out


def test_verify_fails_on_mismatched_scale(capsys):
    assert run_cli("verify", "--rounds", "4", *FAST,
                   "ckks.scale_bits=10") == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.err
    assert "deviation" in captured.out


def test_verify_rejects_zero_rounds(capsys):
    assert run_cli("verify", "--rounds", "0") == 1
    assert "run.rounds" in capsys.readouterr().err


def test_bench_reports_deployment_ciphertext_count(capsys):
    assert run_cli("bench-fhe", "--sample", "1", "--clients", "2") == 0
    out = capsys.readouterr().out
    assert "n_c=3663" in out  # ceil(30e6 / 8192)
    assert "encode+encrypt" in out


def test_bench_zero_vector(capsys):
    assert run_cli("bench-fhe", "--vector-len", "0") == 0
    assert "n_c=0" in capsys.readouterr().out


def test_bench_both_backends_csv(tmp_path, capsys):
    assert run_cli("bench-fhe", "--vector-len", "200", "--poly-degree", "64",
                   "--sample", "2", "--backend", "both",
                   "--out", str(tmp_path)) == 0
    capsys.readouterr()
    rows = (tmp_path / "bench_fhe.csv").read_text().splitlines()
    assert rows[0].startswith("backend,n_c,clients")
    backends = [r.split(",")[0] for r in rows[1:]]
    assert backends == ["numba", "numpy"]


def test_attack_writes_tables(tmp_path, capsys):
    assert run_cli("attack", "--trials", "2", "--rates", "0.0,0.5",
                   "--steps", "25", "--out", str(tmp_path)) == 0
    capsys.readouterr()
    trials = (tmp_path / "attack_trials.csv").read_text().splitlines()
    assert trials[0] == "prune_rate,trial,mse,cosine,grad_residual,diverged"
    assert len(trials) == 1 + 2 * 2
    summary = (tmp_path / "attack_summary.csv").read_text().splitlines()
    assert len(summary) == 1 + 2
    assert run_cli("attack", "--rates", "1.5") == 1


def test_gen_data_shards(tmp_path, capsys):
    out = tmp_path / "data"
    assert run_cli("gen-data", "--clients", "3", "--samples-per-client",
                   "100", "--seed", "5", "--out", str(out)) == 0
    capsys.readouterr()
    shards = [load_client_dataset(out / f"client_{i:02d}.npz")
              for i in range(3)]
    assert [s.n for s in shards] == [100, 100, 100]
    rows = np.vstack([s.inputs for s in shards])
    uniq = np.unique(rows, axis=0)
    assert len(uniq) == 300  # disjoint shards, no duplicated sample


def test_gen_data_reproducible_and_union_invariant(tmp_path, capsys):
    a, b, whole = tmp_path / "a", tmp_path / "b", tmp_path / "w"
    for out in (a, b):
        assert run_cli("gen-data", "--clients", "3",
                       "--samples-per-client", "10", "--seed", "9",
                       "--out", str(out)) == 0
    assert run_cli("gen-data", "--clients", "1", "--samples-per-client",
                   "30", "--seed", "9", "--out", str(whole)) == 0
    capsys.readouterr()
    for i in range(3):
        da = load_client_dataset(a / f"client_{i:02d}.npz")
        db = load_client_dataset(b / f"client_{i:02d}.npz")
        assert np.array_equal(da.inputs, db.inputs)
        assert np.array_equal(da.targets, db.targets)
    # 1 client degenerates to the full pool: unions match as row sets
    union = np.vstack([load_client_dataset(a / f"client_{i:02d}.npz").inputs
                       for i in range(3)])
    pool = load_client_dataset(whole / "client_00.npz").inputs
    order = np.lexsort(union.T)
    order_pool = np.lexsort(pool.T)
    assert np.array_equal(union[order], pool[order_pool])


def test_gen_data_rejects_invalid_sizes(capsys):
    assert run_cli("gen-data", "--samples-per-client", "0") == 1
    assert "error:" in capsys.readouterr().err
