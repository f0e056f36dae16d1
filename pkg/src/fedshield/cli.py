"""Command-line front end.

Verbs: train (federated run with JSONL metrics and a per-client loss CSV),
verify (encrypted-vs-plaintext equivalence check), bench-fhe (encryption
timing report), attack (inversion sweep CSV tables), gen-data (per-client
dataset files). Outputs are plain JSONL/CSV so any plotter can consume them.
FEDSHIELD_LOG={error|info|debug} controls verbosity.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .attack import AttackConfig, paired_sign_test, sweep_prune_rates
from .backend import active_backend
from .ckks import (CkksParams, add, bench_params, ciphertext_count, decode,
                   decrypt, encode, encrypt, keygen, mul_plain_scalar)
from .errors import ConfigError, FedShieldError
from .fed.config import MODES, load_config
from .fed.messages import derive_seed
from .fed.orchestrator import (_TAG_SPLIT, build_model, build_pool,
                               run_training)
from .lora.data import client_file_name, save_client_dataset, split_pool

log = logging.getLogger("fedshield")

VERIFY_BUDGET = 1e-3

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}

# named flag -> config key; positional key=value overrides are applied after
_FLAG_KEYS = (
    ("mode", "run.mode"),
    ("rounds", "run.rounds"),
    ("clients", "run.n_clients"),
    ("clients_per_round", "run.clients_per_round"),
    ("seed", "run.seed"),
)


def _setup_logging() -> None:
    name = os.environ.get("FEDSHIELD_LOG", "error").strip().lower()
    if name not in _LOG_LEVELS:
        raise ConfigError(
            f"FEDSHIELD_LOG must be one of {sorted(_LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name],
                        format="%(levelname)s %(name)s: %(message)s")


def _overrides(args) -> list[str]:
    pairs = [f"{key}={getattr(args, attr)}" for attr, key in _FLAG_KEYS
             if getattr(args, attr, None) is not None]
    return pairs + list(getattr(args, "overrides", []))


def _load(args, extra=()):
    cfg = load_config(args.config, _overrides(args) + list(extra)).validate()
    log.debug("resolved config: %s", json.dumps(cfg.resolved()))
    return cfg


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args)
    metrics_path = os.path.join(out, "metrics.jsonl")
    result = run_training(cfg, out_dir=out, metrics_path=metrics_path)
    csv_path = os.path.join(out, "client_losses.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "mode", "client_id", "train_loss",
                         "val_loss"])
        for rec in result.records:
            for cid, loss in rec.client_losses:
                writer.writerow([rec.round_index, rec.mode, cid, loss,
                                 rec.val_loss])
    print(f"wrote {len(result.records)} round records to {metrics_path}")
    print(f"wrote per-client losses to {csv_path}")
    if result.records:
        print(f"final val_loss {result.records[-1].val_loss:.6g}")
    if result.failed:
        print(f"error: training diverged: {result.error}"
              " (partial metrics kept)", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    """Paired run: encrypted aggregation must track the plaintext control."""
    enc = run_training(_load(args, ("run.mode=fedshield",)),
                       snapshot_adapters=True)
    ctl = run_training(_load(args, ("run.mode=vanilla",)),
                       snapshot_adapters=True)
    for run, label in ((enc, "fedshield"), (ctl, "control")):
        if run.failed:
            print(f"error: {label} run diverged: {run.error}",
                  file=sys.stderr)
            return 1
    devs = [float(np.max(np.abs(a - b)))
            for a, b in zip(enc.snapshots, ctl.snapshots)]
    for t, d in enumerate(devs, 1):
        log.debug("round %d deviation %.3e", t, d)
    worst = max(devs)
    at = devs.index(worst) + 1
    print(f"max per-round adapter deviation {worst:.3e}"
          f" at round {at} of {len(devs)} (budget {VERIFY_BUDGET:.0e})")
    if worst < VERIFY_BUDGET:
        print("PASS: encrypted aggregation matches the plaintext control")
        return 0
    print("FAIL: encrypted aggregation deviates from the plaintext control;"
          " check ckks.scale_bits / ckks.modulus_bits precision",
          file=sys.stderr)
    return 1


def _bench_pass(params: CkksParams, sample: int, k: int, seed: int) -> dict:
    sk, pk = keygen(params, seed=derive_seed(seed, 5))
    rng = np.random.default_rng(seed)
    chunks = rng.uniform(-1.0, 1.0, size=(sample, params.slot_count))

    # untimed warmup: first call pays jit compilation and table caching
    warm = encrypt(encode(chunks[0], params.scale, params), pk, seed=0)
    decode(decrypt(mul_plain_scalar(add(warm, warm), 0.5), sk))

    t0 = time.perf_counter()
    cts = [encrypt(encode(c, params.scale, params), pk,
                   seed=derive_seed(seed, 21, i))
           for i, c in enumerate(chunks)]
    enc_s = (time.perf_counter() - t0) / sample

    t0 = time.perf_counter()
    agg = []
    for ct in cts:
        acc = ct
        for _ in range(k - 1):
            acc = add(acc, ct)
        agg.append(mul_plain_scalar(acc, 1.0 / k))
    agg_s = (time.perf_counter() - t0) / sample

    t0 = time.perf_counter()
    outs = [decode(decrypt(ct, sk))[: params.slot_count] for ct in agg]
    dec_s = (time.perf_counter() - t0) / sample

    err = max(float(np.max(np.abs(o - c))) for o, c in zip(outs, chunks))
    return {"encrypt_s": enc_s, "aggregate_s": agg_s, "decrypt_s": dec_s,
            "roundtrip_err": err}


def cmd_bench_fhe(args) -> int:
    if args.vector_len < 0:
        raise ConfigError("--vector-len must be >= 0")
    if args.clients < 1 or args.sample < 1:
        raise ConfigError("--clients and --sample must be >= 1")
    params = (bench_params() if args.poly_degree == 0
              else CkksParams(poly_degree=args.poly_degree))
    n_c = ciphertext_count(args.vector_len, params.slot_count)
    print(f"vector_len {args.vector_len}: N={params.poly_degree},"
          f" {params.slot_count} slots/ciphertext, n_c={n_c} ciphertexts")
    if n_c == 0:
        return 0
    sample = min(args.sample, n_c)
    backends = (("numba", "numpy") if args.backend == "both"
                else (args.backend,))
    rows = []
    saved = os.environ.get("FEDSHIELD_BACKEND")
    try:
        for want in backends:
            if want != "auto":
                os.environ["FEDSHIELD_BACKEND"] = want
            name = active_backend()
            stats = _bench_pass(params, sample, args.clients, args.seed)
            rows.append({"backend": name, **stats})
            print(f"[{name}] per ciphertext, {sample} sampled:")
            for phase, key in (("encode+encrypt", "encrypt_s"),
                               (f"aggregate k={args.clients}", "aggregate_s"),
                               ("decrypt+decode", "decrypt_s")):
                per = stats[key]
                print(f"  {phase:<18} {per * 1e3:9.3f} ms/ct,"
                      f" est {per * n_c:9.3f} s for the full vector")
            print(f"  round-trip max err {stats['roundtrip_err']:.3e}")
    finally:
        if saved is None:
            os.environ.pop("FEDSHIELD_BACKEND", None)
        else:
            os.environ["FEDSHIELD_BACKEND"] = saved
    print("full-vector seconds are extrapolated from the sampled"
          " ciphertexts; timings are machine-dependent")
    if args.out:
        out = _out_dir(args)
        path = os.path.join(out, "bench_fhe.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["backend", "n_c", "clients", "encrypt_ms_per_ct",
                             "aggregate_ms_per_ct", "decrypt_ms_per_ct",
                             "roundtrip_max_err"])
            for r in rows:
                writer.writerow([r["backend"], n_c, args.clients,
                                 r["encrypt_s"] * 1e3, r["aggregate_s"] * 1e3,
                                 r["decrypt_s"] * 1e3, r["roundtrip_err"]])
        print(f"wrote {path}")
    return 0


def cmd_attack(args) -> int:
    rates = tuple(float(r) for r in args.rates.split(","))
    cfg = AttackConfig(trials=args.trials, rates=rates,
                       attack_steps=args.steps, restarts=args.restarts,
                       victim_lr=args.victim_lr,
                       attacker_lr=args.attacker_lr, seed=args.seed)
    sweep = sweep_prune_rates(cfg)
    out = _out_dir(args)
    trials_path = os.path.join(out, "attack_trials.csv")
    with open(trials_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prune_rate", "trial", "mse", "cosine",
                         "grad_residual", "diverged"])
        for res in sweep.results:
            for i in range(len(res.mse)):
                writer.writerow([res.prune_rate, i, res.mse[i],
                                 res.cosine[i], res.residual[i],
                                 int(res.diverged[i])])
    base = sweep.results[0]
    summary_path = os.path.join(out, "attack_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["prune_rate", "median_mse", "iqr_mse",
                         "median_cosine", "n_diverged", "sign_p_vs_first"])
        for res in sweep.results:
            writer.writerow([res.prune_rate, res.median_mse(), res.iqr_mse(),
                             float(np.median(res.cosine)),
                             sum(res.diverged),
                             paired_sign_test(base.mse, res.mse)])
    for res, med, iqr in zip(sweep.results, sweep.medians, sweep.iqrs):
        print(f"p={res.prune_rate:<4} median mse {med:.3e}"
              f"  iqr {iqr:.3e}  diverged {sum(res.diverged)}"
              f"/{len(res.diverged)}")
    if len(sweep.results) > 1:
        last = sweep.results[-1]
        p_val = paired_sign_test(base.mse, last.mse)
        trend = "degrades" if sweep.monotone_extremes else "does not degrade"
        print(f"pruning {trend} reconstruction: median mse"
              f" {sweep.medians[0]:.3e} -> {sweep.medians[-1]:.3e},"
              f" sign test p={p_val:.4g}")
    print(f"wrote {trials_path} and {summary_path}")
    return 0


def cmd_gen_data(args) -> int:
    pairs = [f"run.n_clients={args.clients}",
             f"data.samples_per_client={args.samples_per_client}",
             f"data.task={args.task}",
             "run.clients_per_round=1"]  # unused by data gen, keep k valid
    if args.seed is not None:
        pairs.append(f"run.seed={args.seed}")
    cfg = load_config(args.config, pairs + list(args.overrides)).validate()
    log.debug("resolved config: %s", json.dumps(cfg.resolved()))
    n_clients = cfg["run.n_clients"]
    model = build_model(cfg)
    pool = build_pool(cfg, model,
                      n_clients * cfg["data.samples_per_client"])
    shards = split_pool(pool, n_clients,
                        seed=derive_seed(cfg["run.seed"], _TAG_SPLIT))
    out = _out_dir(args)
    for i, shard in enumerate(shards):
        path = os.path.join(out, client_file_name(i))
        save_client_dataset(path, shard)
        print(f"wrote {path} ({shard.n} samples)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedshield",
        description="Federated LoRA fine-tuning with pruned, encrypted"
                    " update aggregation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_config_flags(p, with_mode=True):
        p.add_argument("--config", metavar="PATH",
                       help="INI or JSON config file")
        if with_mode:
            p.add_argument("--mode", choices=MODES)
        p.add_argument("--rounds", type=int)
        p.add_argument("--clients", type=int)
        p.add_argument("--clients-per-round", type=int,
                       dest="clients_per_round")
        p.add_argument("--seed", type=int)
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="dotted config overrides, applied last")

    train = sub.add_parser("train", help="run federated training")
    add_config_flags(train)
    train.add_argument("--out", metavar="DIR",
                       help="metrics/checkpoint directory (default .)")
    train.set_defaults(func=cmd_train)

    verify = sub.add_parser(
        "verify",
        help="check encrypted aggregation against a plaintext control")
    add_config_flags(verify, with_mode=False)
    verify.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench-fhe", help="time encrypt/aggregate/decrypt")
    bench.add_argument("--vector-len", type=int, default=30_000_000)
    bench.add_argument("--poly-degree", type=int, default=0,
                       help="0 means the deployment-scale default")
    bench.add_argument("--clients", type=int, default=3)
    bench.add_argument("--sample", type=int, default=4,
                       help="ciphertexts actually timed")
    bench.add_argument("--backend",
                       choices=("auto", "numba", "numpy", "both"),
                       default="auto")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", metavar="DIR",
                       help="also write bench_fhe.csv here")
    bench.set_defaults(func=cmd_bench_fhe)

    attack = sub.add_parser("attack",
                            help="gradient inversion sweep over prune rates")
    attack.add_argument("--trials", type=int, default=20)
    attack.add_argument("--rates", default="0.0,0.5,0.7,0.9",
                        help="comma-separated prune rates in [0, 1)")
    attack.add_argument("--steps", type=int, default=300)
    attack.add_argument("--restarts", type=int, default=4)
    attack.add_argument("--victim-lr", type=float, default=0.1)
    attack.add_argument("--attacker-lr", type=float, default=0.1)
    attack.add_argument("--seed", type=int, default=0)
    attack.add_argument("--out", metavar="DIR",
                        help="CSV output directory (default .)")
    attack.set_defaults(func=cmd_attack)

    gen = sub.add_parser("gen-data", help="write per-client dataset files")
    gen.add_argument("--task", choices=("regression", "classification"),
                     default="regression")
    gen.add_argument("--clients", type=int, default=3)
    gen.add_argument("--samples-per-client", type=int, default=100,
                     dest="samples_per_client")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--config", metavar="PATH")
    gen.add_argument("--out", metavar="DIR",
                     help="dataset directory (default .)")
    gen.add_argument("overrides", nargs="*", metavar="key=value")
    gen.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except (FedShieldError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
