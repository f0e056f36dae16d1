"""Round records and the JSONL metrics file.

The first line of a metrics file is a header object holding the fully
resolved config and the package version; each later line is one round. All
JSON is emitted with sorted keys so identical runs produce identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import FormatError

TIMING_PHASES = ("train", "encrypt", "aggregate", "decrypt")


def zero_timings() -> dict:
    return {phase: 0.0 for phase in TIMING_PHASES}


@dataclass
class RoundRecord:
    round_index: int
    mode: str
    p_t: float
    selected: list
    client_losses: list        # [[client_id, loss], ...] sorted by id
    prune_error_norms: list    # [[client_id, norm], ...] sorted by id
    update_norm: float
    val_loss: float
    grad_norm_sq: float
    timings: dict = field(default_factory=zero_timings)

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "mode": self.mode,
            "p_t": self.p_t,
            "selected": list(self.selected),
            "client_losses": [list(pair) for pair in self.client_losses],
            "prune_error_norms": [list(pair)
                                  for pair in self.prune_error_norms],
            "update_norm": self.update_norm,
            "val_loss": self.val_loss,
            "grad_norm_sq": self.grad_norm_sq,
            "timings": dict(self.timings),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RoundRecord":
        try:
            return cls(round_index=obj["round"], mode=obj["mode"],
                       p_t=obj["p_t"], selected=obj["selected"],
                       client_losses=obj["client_losses"],
                       prune_error_norms=obj["prune_error_norms"],
                       update_norm=obj["update_norm"],
                       val_loss=obj["val_loss"],
                       grad_norm_sq=obj["grad_norm_sq"],
                       timings=obj["timings"])
        except KeyError as exc:
            raise FormatError(f"round record missing field {exc}") from exc


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class MetricsWriter:
    """Append-only JSONL sink; the header goes out on open."""

    def __init__(self, path, resolved_config: dict, version: str):
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(_dump({"config": resolved_config,
                              "version": version}) + "\n")
        self._fh.flush()

    def write_record(self, record: RoundRecord):
        self._fh.write(_dump(record.to_dict()) + "\n")
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_metrics(path):
    """-> (header dict, list of RoundRecord)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line]
    if not lines:
        raise FormatError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: bad JSON line: {exc.msg}") from exc
    if "config" not in header:
        raise FormatError(f"{path}: first line is not a config header")
    return header, [RoundRecord.from_dict(row) for row in rows]
