"""Text checkpoints: versioned, diff-able, byte-stable across round trips.

A checkpoint is canonical JSON (sorted keys, two-space indent) holding the
format version, a string echo of the run config, the iteration counter,
the master rng state, and every named parameter matrix as row-major
little-endian float64 hex. Loading a file and saving it again reproduces
the bytes exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nets import SharedParams
from .tensor import Tensor

__all__ = ["CheckpointError", "CheckpointData", "FORMAT_VERSION",
           "save_checkpoint", "load_checkpoint", "params_payload"]

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint or format version mismatch."""


@dataclass
class CheckpointData:
    format_version: int
    config: dict[str, str]
    iteration: int
    rng_state: dict
    params: dict[str, np.ndarray]

    def to_document(self) -> dict:
        return {
            "format_version": self.format_version,
            "config": dict(sorted(self.config.items())),
            "iteration": self.iteration,
            "rng_state": {k: int(v) for k, v in sorted(self.rng_state.items())},
            "params": {
                name: {
                    "rows": arr.shape[0],
                    "cols": arr.shape[1],
                    "data": arr.astype("<f8").tobytes().hex(),
                }
                for name, arr in sorted(self.params.items())
            },
        }


def params_payload(params: SharedParams) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in params.named()}


def save_checkpoint(path: str | Path, config: dict[str, str], iteration: int,
                    rng_state: dict, params) -> None:
    arrays = (params_payload(params) if isinstance(params, SharedParams)
              else {k: (v.data if isinstance(v, Tensor) else np.asarray(v))
                    for k, v in params.items()})
    data = CheckpointData(FORMAT_VERSION, {k: str(v) for k, v in config.items()},
                          int(iteration), rng_state, arrays)
    payload = json.dumps(data.to_document(), indent=2, sort_keys=True) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload, encoding="utf-8")


def load_checkpoint(path: str | Path) -> CheckpointData:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} != supported {FORMAT_VERSION}")
    params: dict[str, np.ndarray] = {}
    for name, entry in document["params"].items():
        rows, cols = int(entry["rows"]), int(entry["cols"])
        arr = np.frombuffer(bytes.fromhex(entry["data"]), dtype="<f8")
        if arr.size != rows * cols:
            raise CheckpointError(
                f"parameter {name!r}: payload holds {arr.size} values, "
                f"expected {rows * cols}")
        params[name] = arr.reshape(rows, cols).astype(np.float64)
    return CheckpointData(
        format_version=version,
        config={k: str(v) for k, v in document["config"].items()},
        iteration=int(document["iteration"]),
        rng_state=document["rng_state"],
        params=params)
