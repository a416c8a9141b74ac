"""Per-iteration metric records with JSONL and CSV mirror outputs.

Records are append-only and flushed per write so abnormal termination
loses at most the in-flight iteration. Everything except the wall-clock
field is deterministic for a fixed config and seed;
:func:`metric_streams_equal` compares streams modulo that field.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

__all__ = ["MetricRecord", "MetricsWriter", "read_metrics", "metric_streams_equal"]

_FIELDS = ("iteration", "env_steps", "mean_episode_reward", "win_rate",
           "avg_node_information", "policy_loss", "value_loss", "entropy",
           "wall_clock_s")


@dataclass
class MetricRecord:
    iteration: int
    env_steps: int
    mean_episode_reward: float
    win_rate: Optional[float]
    avg_node_information: float
    policy_loss: float
    value_loss: float
    entropy: float
    wall_clock_s: float

    def to_json_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def to_csv_row(self) -> str:
        values = asdict(self)
        return ",".join("" if values[f] is None else repr(values[f])
                        for f in _FIELDS)


class MetricsWriter:
    """Writes metrics.jsonl plus a metrics.csv mirror under one directory."""

    def __init__(self, out_dir: str | Path):
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        self.jsonl_path = out_dir / "metrics.jsonl"
        self.csv_path = out_dir / "metrics.csv"
        self._jsonl = open(self.jsonl_path, "a", encoding="utf-8")
        self._csv = open(self.csv_path, "a", encoding="utf-8")
        if self.csv_path.stat().st_size == 0:
            self._csv.write(",".join(_FIELDS) + "\n")
            self._csv.flush()
        self._last_iteration: Optional[int] = None

    def write(self, record: MetricRecord) -> None:
        if self._last_iteration is not None and record.iteration <= self._last_iteration:
            raise ValueError(
                f"iteration {record.iteration} not after {self._last_iteration}")
        self._last_iteration = record.iteration
        self._jsonl.write(record.to_json_line() + "\n")
        self._jsonl.flush()
        self._csv.write(record.to_csv_row() + "\n")
        self._csv.flush()

    def close(self) -> None:
        self._jsonl.close()
        self._csv.close()

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self.close()


def read_metrics(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def metric_streams_equal(path_a: str | Path, path_b: str | Path,
                         ignore: Sequence[str] = ("wall_clock_s",)) -> bool:
    """True when two jsonl streams agree on every non-ignored field."""
    a, b = read_metrics(path_a), read_metrics(path_b)
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for key in set(ra) | set(rb):
            if key in ignore:
                continue
            if ra.get(key) != rb.get(key):
                return False
    return True
