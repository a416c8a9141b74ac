"""Seedable random streams with documented, reproducible derivation.

The generator is numpy's PCG64, which guarantees the same stream for the
same 64-bit seed on every platform. Parallel workers get independent
streams via :meth:`Rng.split`, defined as ``Rng(seed + index)`` modulo
2**64; replayable sub-streams (e.g. for re-creating sampling noise during
update epochs) come from :meth:`Rng.child_seed`.
"""

from __future__ import annotations

from typing import Any

import numpy as np

_U64 = 2**64


class Rng:
    """Deterministic PCG64 stream behind a small drawing API."""

    def __init__(self, seed: int):
        self.seed = int(seed) % _U64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def split(self, index: int) -> "Rng":
        """Independent worker stream: seed + index (mod 2**64)."""
        return Rng(self.seed + int(index))

    def child_seed(self) -> int:
        """Draw a 64-bit seed for a replayable sub-stream."""
        return int(self._gen.integers(0, _U64, dtype=np.uint64))

    def uniform(self, rows: int, cols: int) -> np.ndarray:
        return self._gen.random((rows, cols))

    def normal(self, rows: int, cols: int) -> np.ndarray:
        return self._gen.standard_normal((rows, cols))

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def bernoulli(self, p: float, rows: int, cols: int) -> np.ndarray:
        """0/1 float matrix of independent Bernoulli(p) draws."""
        return (self._gen.random((rows, cols)) < p).astype(np.float64)

    def categorical(self, probs: np.ndarray) -> np.ndarray:
        """One draw per row of a (batch, k) row-stochastic matrix."""
        cdf = np.cumsum(probs, axis=1)
        u = self._gen.random((probs.shape[0], 1))
        actions = (u > cdf[:, :-1]).sum(axis=1)
        return actions.astype(np.int64)

    def state(self) -> dict[str, Any]:
        """JSON-serializable generator state (plus the originating seed)."""
        st = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "state": int(st["state"]["state"]),
            "inc": int(st["state"]["inc"]),
            "has_uint32": int(st["has_uint32"]),
            "uinteger": int(st["uinteger"]),
        }

    def set_state(self, payload: dict[str, Any]) -> None:
        self.seed = int(payload["seed"])
        st = self._gen.bit_generator.state
        st["state"]["state"] = int(payload["state"])
        st["state"]["inc"] = int(payload["inc"])
        st["has_uint32"] = int(payload["has_uint32"])
        st["uinteger"] = int(payload["uinteger"])
        self._gen.bit_generator.state = st
