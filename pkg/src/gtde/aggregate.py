"""Fuse linked agents' embeddings into per-agent group features.

Two methods. Matrix multiplication: the adjacency carrier times the
embedding matrix, so row i is the plain sum over members of g(v_i).
Masked graph attention: per head, scores e_ij = w1 . tau_i + w2 . tau_j,
row-softmax restricted to linked members, convex mixture of projected
member embeddings, heads concatenated and projected back to the embedding
width. Both routes read the straight-through carrier, so in learned mode
the grouping logits receive gradient from whatever loss consumes the
aggregate; unlinked agents contribute exactly nothing either way.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as tz
from .grouping import AdjacencyMatrix, AdjacencyStack
from .nets import SharedParams
from .tensor import ShapeError, Tensor

__all__ = ["AggregatedFeatures", "matmul_aggregate", "gat_aggregate",
           "matmul_aggregate_stack", "gat_aggregate_stack"]


@dataclass
class AggregatedFeatures:
    matrix: Tensor  # (n, d); row i is the fused feature of group g(v_i)
    method: str


def _check_block(adj: AdjacencyMatrix, embeddings: Tensor) -> None:
    if embeddings.rows != adj.n:
        raise ShapeError(
            f"embeddings rows {embeddings.rows} != adjacency size {adj.n}")


def matmul_aggregate(adj: AdjacencyMatrix, embeddings: Tensor) -> AggregatedFeatures:
    """Row i = sum of member embeddings (unnormalized, as the adjacency product)."""
    _check_block(adj, embeddings)
    return AggregatedFeatures(tz.matmul(adj.carrier, embeddings), "matmul")


def _leaky(scores: Tensor, slope: float = 0.2) -> Tensor:
    return tz.sub(tz.relu(scores), tz.scale(tz.relu(tz.neg(scores)), slope))


def gat_aggregate(adj: AdjacencyMatrix, embeddings: Tensor, params: SharedParams,
                  leaky_scores: bool = False) -> AggregatedFeatures:
    """Masked multi-head attention over each agent's linked members.

    ``leaky_scores`` applies a slope-0.2 leaky rectifier to the scores
    before the softmax; off by default, keeping the affine score form.
    """
    _check_block(adj, embeddings)
    head_outputs = []
    for head in range(params.cfg.heads):
        own = tz.matmul(embeddings, params[f"gat.h{head}.w1"])       # (n, 1)
        other = tz.matmul(embeddings, params[f"gat.h{head}.w2"])     # (n, 1)
        scores = tz.add(own, tz.transpose(other))                    # e_ij
        if leaky_scores:
            scores = _leaky(scores)
        alpha = tz.softmax_rows(scores, mask=adj.hard)
        # Multiplying by the carrier leaves the forward pass unchanged
        # (carrier values are the hard mask) while letting gradients reach
        # the grouping logits through currently-linked entries.
        weights = tz.mul(alpha, adj.carrier)
        projected = tz.matmul(embeddings, params[f"gat.h{head}.proj"])
        head_outputs.append(tz.matmul(weights, projected))
    stacked = tz.concat_cols(head_outputs)
    return AggregatedFeatures(tz.matmul(stacked, params["gat.out"]), "gat")


def matmul_aggregate_stack(stack: AdjacencyStack, embeddings: Tensor) -> Tensor:
    """Batched :func:`matmul_aggregate` over a stack of adjacency blocks."""
    if embeddings.rows != stack.blocks * stack.n:
        raise ShapeError(
            f"embeddings rows {embeddings.rows} != {stack.blocks} blocks of {stack.n}")
    return tz.block_matmul(stack.carrier, embeddings, stack.n, stack.n)


def gat_aggregate_stack(stack: AdjacencyStack, embeddings: Tensor,
                        params: SharedParams,
                        leaky_scores: bool = False) -> Tensor:
    """Batched :func:`gat_aggregate` over a stack of adjacency blocks."""
    if embeddings.rows != stack.blocks * stack.n:
        raise ShapeError(
            f"embeddings rows {embeddings.rows} != {stack.blocks} blocks of {stack.n}")
    mask = Tensor(stack.hard, _copy=False)
    head_outputs = []
    for head in range(params.cfg.heads):
        own = tz.matmul(embeddings, params[f"gat.h{head}.w1"])
        other = tz.matmul(embeddings, params[f"gat.h{head}.w2"])
        scores = tz.block_outer_sum(own, other, stack.n)
        if leaky_scores:
            scores = _leaky(scores)
        alpha = tz.softmax_rows(scores, mask=mask)
        weights = tz.mul(alpha, stack.carrier)
        projected = tz.matmul(embeddings, params[f"gat.h{head}.proj"])
        head_outputs.append(tz.block_matmul(weights, projected, stack.n, stack.n))
    stacked = tz.concat_cols(head_outputs)
    return tz.matmul(stacked, params["gat.out"])
