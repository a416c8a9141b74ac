"""Directed grouping graph: adjacency sampling, masking, group extraction.

Row i of the adjacency matrix is agent i's sampled link distribution; the
group g(v_i) is the set of column indices where row i holds a 1. The mask
pipeline runs self-link first (diagonal forced to 1, no gradient through
forced entries), then the optional communication-drop mask (off-diagonal
ones zeroed independently, training only).

Every adjacency carries three matrices: ``soft`` (link probabilities or
degenerate equivalents for the non-learned modes), ``hard`` (the 0/1
sample) and ``carrier`` -- a tensor whose forward values equal ``hard``
but whose gradient, in learned mode, flows back to the grouping logits
via the straight-through soft path. Aggregation consumes the carrier.

``adjacency_sample_count`` counts constructions; the evaluation protocol
asserts it stays flat, since decentralized execution never builds one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from . import reparam
from . import tensor as tz
from .rng import Rng
from .tensor import ShapeError, Tensor

__all__ = [
    "ADJACENCY_MODES",
    "AdjacencyMatrix",
    "AdjacencyStack",
    "GroupAssignment",
    "UndefinedMetricError",
    "sample_adjacency",
    "sample_adjacency_stack",
    "draw_fixed_hard",
    "apply_self_link_mask",
    "apply_drop_mask",
    "extract_groups",
    "avg_node_information",
    "group_records",
    "adjacency_sample_count",
    "reset_adjacency_sample_count",
]

ADJACENCY_MODES = ("learned", "fixed", "uniform", "all_ones")

_SAMPLE_COUNT = 0


def adjacency_sample_count() -> int:
    return _SAMPLE_COUNT


def reset_adjacency_sample_count() -> None:
    global _SAMPLE_COUNT
    _SAMPLE_COUNT = 0


class UndefinedMetricError(ValueError):
    """Metric requested over zero recorded agent-steps."""


@dataclass
class GroupAssignment:
    """Per-agent member sets: members[i] = sorted agents linked from i."""

    members: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class AdjacencyMatrix:
    n: int
    soft: Tensor
    hard: Tensor
    carrier: Tensor
    timestep: int = 0


def draw_fixed_hard(n: int, rng: Rng) -> np.ndarray:
    """The frozen grouping sample for fixed mode: Bernoulli(0.5) off-diagonal."""
    hard = rng.bernoulli(0.5, n, n)
    np.fill_diagonal(hard, 0.0)
    return hard


def sample_adjacency(logodds: Tensor, temperature: float, rng: Rng,
                     mode: str = "learned",
                     fixed_hard: Optional[np.ndarray] = None,
                     timestep: int = 0,
                     hard_override: Optional[np.ndarray] = None,
                     straight: bool = True) -> AdjacencyMatrix:
    """Draw one timestep's raw adjacency (masks are applied separately).

    learned   Gumbel-Sigmoid on the per-agent log-odds, straight-through
              carrier (or the soft matrix itself when ``straight`` is off,
              which finite-difference tests use). ``hard_override`` replays
              a recorded sample while keeping the recomputed soft path.
    fixed     reuse the ``fixed_hard`` matrix drawn once at run start.
    uniform   fresh Bernoulli(0.5) draw, no gradient.
    all_ones  pairwise links, no gradient.
    """
    global _SAMPLE_COUNT
    if mode not in ADJACENCY_MODES:
        raise ValueError(f"unknown adjacency mode {mode!r}; expected one of {ADJACENCY_MODES}")
    n = logodds.rows
    if logodds.cols != n:
        raise ShapeError(f"adjacency log-odds must be square, got {logodds.shape}")
    _SAMPLE_COUNT += 1

    if mode == "learned":
        sample = reparam.gumbel_sigmoid(logodds, temperature, rng)
        if hard_override is not None:
            sample = reparam.GumbelSample(
                soft=sample.soft,
                hard=Tensor(np.asarray(hard_override, dtype=np.float64)),
                temperature=sample.temperature)
        carrier = reparam.straight_through(sample) if straight else sample.soft
        return AdjacencyMatrix(n=n, soft=tz.detach(sample.soft), hard=sample.hard,
                               carrier=carrier, timestep=timestep)

    if mode == "fixed":
        if fixed_hard is None:
            raise ValueError("fixed mode requires the frozen matrix drawn at run start")
        hard = np.asarray(fixed_hard, dtype=np.float64)
        if hard.shape != (n, n):
            raise ShapeError(f"fixed matrix shape {hard.shape} != ({n}, {n})")
        soft = np.full((n, n), 0.5)
    elif mode == "uniform":
        hard = rng.bernoulli(0.5, n, n)
        soft = np.full((n, n), 0.5)
    else:  # all_ones
        hard = np.ones((n, n))
        soft = np.ones((n, n))
    hard_t = Tensor(hard)
    return AdjacencyMatrix(n=n, soft=Tensor(soft, _copy=False), hard=hard_t,
                           carrier=hard_t, timestep=timestep)


def apply_self_link_mask(adj: AdjacencyMatrix) -> AdjacencyMatrix:
    """Force the diagonal to 1 in soft, hard and carrier; idempotent.

    Forced entries pass no gradient: the carrier's diagonal is rebuilt
    from constants.
    """
    off = Tensor(1.0 - np.eye(adj.n), _copy=False)
    identity = tz.eye(adj.n)
    carrier = tz.add(tz.mul(adj.carrier, off), identity)
    soft = Tensor(adj.soft.data * off.data + identity.data, _copy=False)
    hard = Tensor(adj.hard.data * off.data + identity.data, _copy=False)
    return replace(adj, soft=soft, hard=hard, carrier=carrier)


def apply_drop_mask(adj: AdjacencyMatrix, drop_prob: float, rng: Rng) -> AdjacencyMatrix:
    """Zero each off-diagonal one independently with ``drop_prob``.

    The diagonal is exempt: an agent cannot lose its own observation.
    Dropped entries carry no gradient. A full n x n uniform block is drawn
    regardless of the hard values so seed replay stays aligned.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError(f"drop_prob must be in [0, 1), got {drop_prob}")
    keep = (rng.uniform(adj.n, adj.n) >= drop_prob).astype(np.float64)
    np.fill_diagonal(keep, 1.0)
    keep_t = Tensor(keep, _copy=False)
    return replace(adj,
                   hard=Tensor(adj.hard.data * keep, _copy=False),
                   carrier=tz.mul(adj.carrier, keep_t))


@dataclass
class AdjacencyStack:
    """Many same-sized adjacency blocks stacked along the row axis.

    The batched twin of the per-block pipeline (sample, self-link, drop)
    used by the trainer: one tape node per elementwise stage instead of
    one per block. Values agree with the per-block pipeline bit for bit.
    """

    n: int                  # block size
    blocks: int
    soft: np.ndarray        # (blocks * n, n), post self-link mask
    hard_raw: np.ndarray    # raw sample, pre-mask
    hard: np.ndarray        # final, post self-link and drop masks
    carrier: Tensor         # forward values equal ``hard``


def sample_adjacency_stack(logodds: Optional[Tensor], temperature: float,
                           seeds: Sequence[int], mode: str, n: int,
                           fixed_hard: Optional[np.ndarray] = None,
                           drop_prob: Optional[float] = None,
                           hard_raw_override: Optional[np.ndarray] = None,
                           straight: bool = True) -> AdjacencyStack:
    """Run the full adjacency pipeline for a stack of blocks at once.

    ``seeds`` holds one replayable sub-stream seed per block; each block's
    stream is consumed exactly as the per-block ops would (two Gumbel
    matrices in learned mode, one Bernoulli matrix in uniform mode, one
    drop matrix when ``drop_prob`` is set), so recorded seeds replay the
    same noise during update epochs. ``hard_raw_override`` substitutes the
    recorded raw sample while keeping the recomputed soft path.
    """
    global _SAMPLE_COUNT
    if mode not in ADJACENCY_MODES:
        raise ValueError(f"unknown adjacency mode {mode!r}; expected one of {ADJACENCY_MODES}")
    blocks = len(seeds)
    if blocks == 0:
        raise ShapeError("empty adjacency stack")
    _SAMPLE_COUNT += blocks

    rngs = [Rng(int(s)) for s in seeds]
    carrier: Tensor
    if mode == "learned":
        if logodds is None or logodds.shape != (blocks * n, n):
            got = None if logodds is None else logodds.shape
            raise ShapeError(
                f"learned mode needs ({blocks * n}, {n}) log-odds, got {got}")
        e1 = np.vstack([reparam.sample_gumbel(n, n, r).data for r in rngs])
        e2 = np.vstack([reparam.sample_gumbel(n, n, r).data for r in rngs])
        shifted = tz.add(logodds, Tensor(e1 - e2, _copy=False))
        pre = tz.clip(tz.scale(shifted, 1.0 / float(temperature)), -36.0, 36.0)
        soft = tz.sigmoid(pre)
        hard_raw = (hard_raw_override if hard_raw_override is not None
                    else (soft.data > 0.5).astype(np.float64))
        carrier = tz.straight_through(soft, hard_raw) if straight else soft
        soft_values = soft.data
    else:
        if mode == "fixed":
            if fixed_hard is None:
                raise ValueError("fixed mode requires the frozen matrix drawn at run start")
            hard_raw = np.tile(np.asarray(fixed_hard, dtype=np.float64), (blocks, 1))
            soft_values = np.full((blocks * n, n), 0.5)
        elif mode == "uniform":
            hard_raw = np.vstack([r.bernoulli(0.5, n, n) for r in rngs])
            soft_values = np.full((blocks * n, n), 0.5)
        else:  # all_ones
            hard_raw = np.ones((blocks * n, n))
            soft_values = np.ones((blocks * n, n))
        carrier = Tensor(hard_raw)

    off = np.tile(1.0 - np.eye(n), (blocks, 1))
    eye = np.tile(np.eye(n), (blocks, 1))
    carrier = tz.add(tz.mul(carrier, Tensor(off, _copy=False)),
                     Tensor(eye, _copy=False))
    soft_values = soft_values * off + eye
    hard = hard_raw * off + eye
    if drop_prob is not None:
        if not 0.0 <= drop_prob < 1.0:
            raise ValueError(f"drop_prob must be in [0, 1), got {drop_prob}")
        keep = np.vstack([(r.uniform(n, n) >= drop_prob).astype(np.float64)
                          for r in rngs])
        keep = keep * off + eye  # diagonal exempt
        carrier = tz.mul(carrier, Tensor(keep, _copy=False))
        hard = hard * keep
    return AdjacencyStack(n=n, blocks=blocks, soft=soft_values,
                          hard_raw=np.asarray(hard_raw), hard=hard,
                          carrier=carrier)


def extract_groups(adj: AdjacencyMatrix) -> GroupAssignment:
    """g(v_i) = column indices of ones in hard row i."""
    hard = adj.hard.data
    return GroupAssignment(tuple(
        tuple(int(j) for j in np.flatnonzero(hard[i] == 1.0))
        for i in range(adj.n)))


def avg_node_information(assignments: Sequence[GroupAssignment],
                         alive_masks: Sequence[np.ndarray]) -> float:
    """Mean group size |g(v_i)| over alive agents and timesteps.

    Dead agents are excluded both as group owners and as counted members.
    """
    if len(assignments) != len(alive_masks):
        raise ShapeError(
            f"{len(assignments)} assignments vs {len(alive_masks)} alive masks")
    total = 0
    count = 0
    for assignment, alive in zip(assignments, alive_masks):
        alive = np.asarray(alive, dtype=bool)
        if alive.shape != (len(assignment),):
            raise ShapeError(
                f"alive mask shape {alive.shape} != ({len(assignment)},)")
        alive_set = set(np.flatnonzero(alive))
        for i in alive_set:
            total += sum(1 for member in assignment.members[i] if member in alive_set)
            count += 1
    if count == 0:
        raise UndefinedMetricError("no alive agent-steps recorded")
    return total / count


def group_records(episode: int, assignments: Sequence[GroupAssignment],
                  alive_masks: Optional[Sequence[np.ndarray]] = None) -> Iterator[dict]:
    """Line-delimited export records for external link visualization."""
    for timestep, assignment in enumerate(assignments):
        alive = (np.ones(len(assignment), dtype=bool) if alive_masks is None
                 else np.asarray(alive_masks[timestep], dtype=bool))
        for agent, members in enumerate(assignment.members):
            yield {
                "episode": int(episode),
                "timestep": int(timestep),
                "agent": int(agent),
                "alive": bool(alive[agent]),
                "members": [int(m) for m in members],
            }
