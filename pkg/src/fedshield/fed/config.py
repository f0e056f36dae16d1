"""Run configuration: flat dotted keys, INI or JSON files, CLI overrides.

Every run parameter lives in DEFAULTS under a "section.key" name. Config
files may be INI (sections mirror the prefixes) or JSON (nested sections or
flat dotted keys; a {"config": {...}} wrapper, as written in metrics
headers, is unwrapped). Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass

from ..ckks.params import CkksParams
from ..errors import ConfigError
from ..pruning import GRANULARITIES, PruneSchedule

MODES = ("fedshield", "vanilla", "dp_lora")
KEY_AUTHORITY_PLACEMENTS = ("separate", "colocated_server")
OPTIMIZERS = ("sgd", "adam")
LOSSES = ("auto", "mse", "cross_entropy")
WEIGHTINGS = ("uniform", "data_size")
TASKS = ("regression", "blobs")
ACTIVATIONS = ("identity", "relu", "tanh")

DEFAULTS = {
    "run.n_clients": 3,
    "run.clients_per_round": 3,
    "run.rounds": 50,
    "run.mode": "fedshield",
    "run.seed": 0,
    "run.key_authority": "separate",
    "run.dropout_round": -1,   # -1 disables the simulated dropout
    "run.dropout_client": -1,
    "run.record_timings": False,
    "run.checkpoint_every": 10,
    "train.lr": 5e-5,
    "train.local_epochs": 1,
    "train.optimizer": "adam",
    "train.loss": "auto",
    "train.weighting": "uniform",
    "prune.enabled": True,
    "prune.p0": 0.2,
    "prune.p_target": 0.5,
    "prune.t_eff": 0,
    "prune.t_target": 200,
    "prune.granularity": "factor",
    "ckks.poly_degree": 4096,
    "ckks.modulus_bits": "60,40,60",
    "ckks.scale_bits": 40,
    "dp.clip": 1.0,
    "dp.noise": 0.5,
    "data.task": "regression",
    "data.samples_per_client": 32,
    "data.d_in": 8,
    "data.d_out": 4,
    "data.noise_std": 0.0,
    "data.val_samples": 64,
    "data.planted_rank": 2,
    "data.delta_scale": 1.0,
    "model.hidden": "",        # comma list of hidden widths, empty = linear
    "model.activation": "tanh",
    "model.rank": 2,
    "model.alpha": 0.0,        # 0 means the adapter default of 2*rank
}

_ENUMS = {
    "run.mode": MODES,
    "run.key_authority": KEY_AUTHORITY_PLACEMENTS,
    "train.optimizer": OPTIMIZERS,
    "train.loss": LOSSES,
    "train.weighting": WEIGHTINGS,
    "prune.granularity": GRANULARITIES,
    "data.task": TASKS,
    "model.activation": ACTIVATIONS,
}

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _coerce(key: str, raw) -> object:
    want = type(DEFAULTS[key])
    try:
        if want is bool:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in _TRUE:
                return True
            if text in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if want is int:
            if isinstance(raw, bool):
                raise ValueError("boolean where integer expected")
            return int(str(raw).strip()) if isinstance(raw, str) else int(raw)
        if want is float:
            return float(raw)
        return str(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def _parse_int_list(text: str, key: str) -> list[int]:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"bad integer list for {key}: {text!r}") from exc


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def resolved(self) -> dict:
        """Full flat config, sorted; JSON-safe primitives only."""
        return dict(sorted(self.values.items()))

    def prune_schedule(self) -> PruneSchedule:
        return PruneSchedule(p0=self["prune.p0"],
                             p_target=self["prune.p_target"],
                             t_eff=self["prune.t_eff"],
                             t_target=self["prune.t_target"])

    def ckks_params(self) -> CkksParams:
        bits = _parse_int_list(self["ckks.modulus_bits"],
                               "ckks.modulus_bits")
        return CkksParams(poly_degree=self["ckks.poly_degree"],
                          modulus_bits=tuple(bits),
                          scale_bits=self["ckks.scale_bits"])

    def layer_sizes(self) -> list[int]:
        hidden = _parse_int_list(self["model.hidden"], "model.hidden")
        return [self["data.d_in"]] + hidden + [self["data.d_out"]]

    def loss_name(self):
        name = self["train.loss"]
        return None if name == "auto" else name

    def adapter_alpha(self):
        alpha = self["model.alpha"]
        return None if alpha == 0.0 else alpha

    def validate(self) -> "RunConfig":
        n, k = self["run.n_clients"], self["run.clients_per_round"]
        if n < 1:
            raise ConfigError("run.n_clients must be >= 1")
        if not 1 <= k <= n:
            raise ConfigError(
                f"run.clients_per_round must lie in [1, {n}], got {k}")
        if self["run.rounds"] < 1:
            raise ConfigError("run.rounds must be >= 1")
        if self["run.checkpoint_every"] < 1:
            raise ConfigError("run.checkpoint_every must be >= 1")
        for key, allowed in _ENUMS.items():
            if self[key] not in allowed:
                raise ConfigError(
                    f"{key} must be one of {allowed}, got {self[key]!r}")
        if self["train.lr"] < 0:
            raise ConfigError("train.lr must be >= 0")
        if self["train.local_epochs"] < 1:
            raise ConfigError("train.local_epochs must be >= 1")
        if self["dp.clip"] <= 0:
            raise ConfigError("dp.clip must be positive")
        if self["dp.noise"] < 0:
            raise ConfigError("dp.noise must be >= 0")
        for key in ("data.samples_per_client", "data.val_samples",
                    "data.d_in", "data.d_out", "data.planted_rank",
                    "model.rank"):
            if self[key] < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self["data.noise_std"] < 0:
            raise ConfigError("data.noise_std must be >= 0")
        try:
            self.prune_schedule()
            if self["run.mode"] == "fedshield":
                self.ckks_params()
            self.layer_sizes()
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(str(exc)) from exc
        return self


def _flatten(obj: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in obj.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, f"{name}."))
        else:
            out[name] = val
    return out


def _load_file_pairs(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: JSON parse error at line {exc.lineno},"
                f" column {exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level JSON must be an object")
        if isinstance(data.get("config"), dict):
            data = data["config"]
        return _flatten(data)
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    pairs = {}
    for section in parser.sections():
        for opt, val in parser.items(section):
            pairs[f"{section}.{opt}"] = val
    return pairs


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the optional file, then "key=value" override strings."""
    values = dict(DEFAULTS)

    def set_pair(key: str, raw):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, raw)

    if path is not None:
        for key, raw in _load_file_pairs(path).items():
            set_pair(key, raw)
    for item in overrides:
        key, sep, raw = str(item).partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value: {item!r}")
        set_pair(key.strip(), raw.strip())
    return RunConfig(values=values).validate()
