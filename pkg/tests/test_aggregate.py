import numpy as np
import pytest

import gtde.tensor as tz
from gtde.aggregate import (gat_aggregate, gat_aggregate_stack,
                            matmul_aggregate, matmul_aggregate_stack)
from gtde.grouping import (AdjacencyMatrix, apply_self_link_mask,
                           sample_adjacency, sample_adjacency_stack)
from gtde.nets import NetConfig, SharedParams
from gtde.rng import Rng
from gtde.tensor import ShapeError, Tape, Tensor
from util import FD_TOL, central_difference, fd_rel_error


def const_adj(hard: np.ndarray) -> AdjacencyMatrix:
    t = Tensor(hard)
    return AdjacencyMatrix(hard.shape[0], t, t, t)


def gat_params(seed=0, n=3, d=6, heads=2):
    cfg = NetConfig(obs_dim=2, n_actions=2, group_width=n, critic_in_dim=d,
                    history_len=1, hidden=d, heads=heads, gat_head_dim=4)
    return cfg, SharedParams(cfg, Rng(seed))


def gat_oracle(hard, emb, params, leaky=False):
    """Independent numpy recomputation of masked multi-head attention."""
    cfg = params.cfg
    heads_out = []
    for h in range(cfg.heads):
        u = emb @ params[f"gat.h{h}.w1"].data
        v = emb @ params[f"gat.h{h}.w2"].data
        scores = u + v.T
        if leaky:
            scores = np.where(scores > 0, scores, 0.2 * scores)
        alpha = np.zeros_like(scores)
        for i in range(hard.shape[0]):
            linked = hard[i] == 1.0
            row = scores[i, linked]
            e = np.exp(row - row.max())
            alpha[i, linked] = e / e.sum()
        proj = emb @ params[f"gat.h{h}.proj"].data
        heads_out.append(alpha @ proj)
    return np.hstack(heads_out) @ params["gat.out"].data


class TestMatmulAggregate:
    def test_identity_returns_embeddings(self):
        emb = Rng(1).normal(4, 5)
        out = matmul_aggregate(const_adj(np.eye(4)), Tensor(emb))
        assert np.array_equal(out.matrix.data, emb)
        assert out.method == "matmul"

    def test_all_ones_gives_column_sums(self):
        emb = Rng(2).normal(3, 4)
        out = matmul_aggregate(const_adj(np.ones((3, 3))), Tensor(emb))
        expected = np.tile(emb.sum(axis=0, keepdims=True), (3, 1))
        assert np.abs(out.matrix.data - expected).max() < 1e-12

    def test_set_sum_oracle(self):
        hard = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        emb = Rng(3).normal(3, 4)
        out = matmul_aggregate(const_adj(hard), Tensor(emb)).matrix.data
        for i in range(3):
            members = np.flatnonzero(hard[i])
            expected = sum(emb[j] for j in members)
            assert np.abs(out[i] - expected).max() < 1e-12

    def test_linearity(self):
        rng = Rng(4)
        hard = rng.bernoulli(0.5, 4, 4) + np.eye(4)
        hard = np.clip(hard, 0, 1)
        adj = const_adj(hard)
        x, y = rng.normal(4, 3), rng.normal(4, 3)
        joint = matmul_aggregate(adj, Tensor(x + y)).matrix.data
        split = (matmul_aggregate(adj, Tensor(x)).matrix.data
                 + matmul_aggregate(adj, Tensor(y)).matrix.data)
        assert np.abs(joint - split).max() < 1e-12

    def test_ctde_degeneration_rows_identical(self):
        emb = Rng(5).normal(5, 6)
        out = matmul_aggregate(const_adj(np.ones((5, 5))), Tensor(emb)).matrix.data
        assert all(np.array_equal(out[0], out[i]) for i in range(5))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul_aggregate(const_adj(np.eye(3)), tz.zeros(4, 2))


class TestGatAggregate:
    def test_matches_numpy_oracle(self):
        cfg, params = gat_params(seed=6, n=4)
        rng = Rng(7)
        emb = rng.normal(4, cfg.hidden)
        hard = np.clip(rng.bernoulli(0.5, 4, 4) + np.eye(4), 0, 1)
        out = gat_aggregate(const_adj(hard), Tensor(emb), params)
        assert out.method == "gat"
        expected = gat_oracle(hard, emb, params)
        assert np.abs(out.matrix.data - expected).max() < 1e-12

    def test_leaky_variant_matches_oracle(self):
        cfg, params = gat_params(seed=8, n=4)
        rng = Rng(9)
        emb = rng.normal(4, cfg.hidden)
        hard = np.clip(rng.bernoulli(0.5, 4, 4) + np.eye(4), 0, 1)
        out = gat_aggregate(const_adj(hard), Tensor(emb), params, leaky_scores=True)
        expected = gat_oracle(hard, emb, params, leaky=True)
        assert np.abs(out.matrix.data - expected).max() < 1e-12

    def test_singleton_group_ignores_scores(self):
        cfg, params = gat_params(seed=10, n=3)
        emb = Rng(11).normal(3, cfg.hidden)
        out = gat_aggregate(const_adj(np.eye(3)), Tensor(emb), params).matrix.data
        # alpha_ii = 1: output row i is the projection of row i alone
        parts = [emb @ params[f"gat.h{h}.proj"].data for h in range(cfg.heads)]
        expected = np.hstack(parts) @ params["gat.out"].data
        assert np.abs(out - expected).max() < 1e-12

    def test_equal_scores_give_member_mean(self):
        cfg, params = gat_params(seed=12, n=4)
        # zero score weights -> uniform attention over linked members
        params._params["gat.h0.w1"] = tz.zeros(cfg.hidden, 1)
        params._params["gat.h0.w2"] = tz.zeros(cfg.hidden, 1)
        params._params["gat.h1.w1"] = tz.zeros(cfg.hidden, 1)
        params._params["gat.h1.w2"] = tz.zeros(cfg.hidden, 1)
        rng = Rng(13)
        emb = rng.normal(4, cfg.hidden)
        hard = np.clip(rng.bernoulli(0.5, 4, 4) + np.eye(4), 0, 1)
        out = gat_aggregate(const_adj(hard), Tensor(emb), params).matrix.data
        parts = []
        for h in range(cfg.heads):
            proj = emb @ params[f"gat.h{h}.proj"].data
            rows = np.vstack([proj[hard[i] == 1.0].mean(axis=0) for i in range(4)])
            parts.append(rows)
        expected = np.hstack(parts) @ params["gat.out"].data
        assert np.abs(out - expected).max() < 1e-10

    def test_mask_invariance_to_nonmember_perturbation(self):
        cfg, params = gat_params(seed=14, n=4)
        rng = Rng(15)
        emb = rng.normal(4, cfg.hidden)
        hard = np.eye(4)
        hard[0, 1] = 1.0  # g(v_0) = {0, 1}; agents 2, 3 are non-members
        base = gat_aggregate(const_adj(hard), Tensor(emb), params).matrix.data
        poked = emb.copy()
        poked[2] += rng.normal(1, cfg.hidden)[0] * 10
        out = gat_aggregate(const_adj(hard), Tensor(poked), params).matrix.data
        assert np.array_equal(out[0], base[0])
        assert np.array_equal(out[1], base[1])

    def test_gradient_fd_through_scores_softmax_mixture(self):
        cfg, params = gat_params(seed=16, n=3)
        rng = Rng(17)
        emb0 = rng.normal(3, cfg.hidden)
        hard = np.clip(rng.bernoulli(0.6, 3, 3) + np.eye(3), 0, 1)
        w = rng.normal(3, cfg.hidden)

        def loss_fn(emb_values):
            out = gat_aggregate(const_adj(hard), Tensor(emb_values), params)
            return tz.sum_all(tz.mul(out.matrix, Tensor(w)))

        with Tape() as tape:
            emb = Tensor(emb0, requires_grad=True)
            out = gat_aggregate(const_adj(hard), emb, params)
            grads = tape.backward(tz.sum_all(tz.mul(out.matrix, Tensor(w))))
            analytic = grads.wrt(emb).data
        fd = central_difference(lambda v: loss_fn(v).item(), emb0)
        assert fd_rel_error(analytic, fd) < FD_TOL


class TestLocality:
    """Perturbing a non-member's embedding changes member rows by exactly 0."""

    @pytest.mark.parametrize("method", ["matmul", "gat"])
    def test_perturbation_locality(self, method):
        cfg, params = gat_params(seed=18, n=5)
        rng = Rng(19)
        for _ in range(100):
            emb = rng.normal(5, cfg.hidden)
            hard = np.clip(rng.bernoulli(0.4, 5, 5) + np.eye(5), 0, 1)
            adj = const_adj(hard)
            agg = matmul_aggregate if method == "matmul" else (
                lambda a, e: gat_aggregate(a, e, params))
            base = agg(adj, Tensor(emb)).matrix.data
            k = int(rng.integers(0, 5, 1)[0])
            poked = emb.copy()
            poked[k] += rng.normal(1, cfg.hidden)[0]
            out = agg(adj, Tensor(poked)).matrix.data
            unaffected = np.flatnonzero(hard[:, k] == 0.0)
            assert np.array_equal(out[unaffected], base[unaffected])


class TestStackedTwins:
    def test_matmul_stack_matches_per_block(self):
        rng = Rng(20)
        n, blocks, d = 3, 5, 4
        seeds = list(range(50, 50 + blocks))
        logodds = rng.normal(blocks * n, n)
        emb = rng.normal(blocks * n, d)
        stack = sample_adjacency_stack(Tensor(logodds), 1.0, seeds, "learned", n)
        out = matmul_aggregate_stack(stack, Tensor(emb)).data
        for b in range(blocks):
            child = Rng(seeds[b])
            adj = apply_self_link_mask(sample_adjacency(
                Tensor(logodds[b * n:(b + 1) * n]), 1.0, child))
            rows = slice(b * n, (b + 1) * n)
            expected = matmul_aggregate(adj, Tensor(emb[rows])).matrix.data
            assert np.array_equal(out[rows], expected)

    def test_gat_stack_matches_per_block(self):
        cfg, params = gat_params(seed=21, n=3)
        rng = Rng(22)
        blocks = 4
        seeds = list(range(90, 90 + blocks))
        logodds = rng.normal(blocks * 3, 3)
        emb = rng.normal(blocks * 3, cfg.hidden)
        stack = sample_adjacency_stack(Tensor(logodds), 1.0, seeds, "learned", 3)
        out = gat_aggregate_stack(stack, Tensor(emb), params).data
        for b in range(blocks):
            child = Rng(seeds[b])
            adj = apply_self_link_mask(sample_adjacency(
                Tensor(logodds[b * 3:(b + 1) * 3]), 1.0, child))
            rows = slice(b * 3, (b + 1) * 3)
            expected = gat_aggregate(adj, Tensor(emb[rows]), params).matrix.data
            assert np.abs(out[rows] - expected).max() < 1e-12
