"""Shared network heads: history encoder, policy, grouping, value and Q.

One parameter set serves every agent. The encoder consumes a fixed-length
window of stacked recent observations; the policy and grouping heads read
the encoder output, so action selection and link selection both depend
only on the acting agent's own history. Critic heads read a
paradigm-dependent input (own embedding, team concatenation, or group
aggregate) and are sized accordingly at construction.

Matrices are initialized orthogonally (gain sqrt(2) for hidden layers,
0.01 for the policy head, 1.0 elsewhere); biases start at zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .rng import Rng
from .tensor import ShapeError, Tensor

__all__ = [
    "NetConfig",
    "HistoryWindow",
    "HistoryBuffer",
    "SharedParams",
    "encode",
    "policy_forward",
    "grouping_forward",
    "value_forward",
    "q_forward",
    "sample_actions",
    "greedy_actions",
    "action_log_probs",
    "entropy",
]


@dataclass
class NetConfig:
    obs_dim: int
    n_actions: int
    group_width: int      # grouping head output: one log-odds per linkable agent
    critic_in_dim: int    # paradigm-dependent critic input width
    history_len: int = 4
    hidden: int = 64
    heads: int = 4
    gat_head_dim: int = 64

    @property
    def window_dim(self) -> int:
        return self.obs_dim * self.history_len


class HistoryWindow:
    """Fixed-length window of one agent's most recent observations.

    Always exactly ``history_len`` frames, oldest first; slots before the
    start of the episode hold zero vectors, as do frames observed while
    the agent is dead.
    """

    def __init__(self, agent_id: int, obs_dim: int, history_len: int):
        self.agent_id = agent_id
        self.obs_dim = obs_dim
        self.history_len = history_len
        self._frames = np.zeros((history_len, obs_dim))

    def push(self, obs: np.ndarray) -> None:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise ShapeError(
                f"observation shape {obs.shape} != ({self.obs_dim},)")
        self._frames = np.roll(self._frames, -1, axis=0)
        self._frames[-1] = obs

    def reset(self) -> None:
        self._frames[:] = 0.0

    def as_row(self) -> np.ndarray:
        """Flat (1, history_len * obs_dim) view, oldest frame first."""
        return self._frames.reshape(1, -1).copy()


class HistoryBuffer:
    """Rolling windows for all agents of one environment."""

    def __init__(self, n_agents: int, obs_dim: int, history_len: int):
        self.n_agents = n_agents
        self.obs_dim = obs_dim
        self.history_len = history_len
        self._frames = np.zeros((n_agents, history_len, obs_dim))

    def push(self, obs: np.ndarray) -> None:
        if obs.shape != (self.n_agents, self.obs_dim):
            raise ShapeError(
                f"joint observation shape {obs.shape} != "
                f"({self.n_agents}, {self.obs_dim})")
        self._frames = np.roll(self._frames, -1, axis=1)
        self._frames[:, -1, :] = obs

    def reset(self) -> None:
        self._frames[:] = 0.0

    def window_matrix(self) -> np.ndarray:
        """(n_agents, history_len * obs_dim), each row oldest-first."""
        return self._frames.reshape(self.n_agents, -1).copy()


def _orthogonal(rng: Rng, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.normal(max(rows, cols), min(rows, cols))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class SharedParams:
    """The single parameter set shared by all agents."""

    def __init__(self, cfg: NetConfig, rng: Rng):
        self.cfg = cfg
        h = cfg.hidden
        tensors: dict[str, np.ndarray] = {
            "enc.w1": _orthogonal(rng, cfg.window_dim, h, np.sqrt(2.0)),
            "enc.b1": np.zeros((1, h)),
            "enc.w2": _orthogonal(rng, h, h, np.sqrt(2.0)),
            "enc.b2": np.zeros((1, h)),
            "policy.w": _orthogonal(rng, h, cfg.n_actions, 0.01),
            "policy.b": np.zeros((1, cfg.n_actions)),
            "group.w": _orthogonal(rng, h, cfg.group_width, 1.0),
            "group.b": np.zeros((1, cfg.group_width)),
            "value.w": _orthogonal(rng, cfg.critic_in_dim, 1, 1.0),
            "value.b": np.zeros((1, 1)),
            "q.w": _orthogonal(rng, cfg.critic_in_dim, cfg.n_actions, 1.0),
            "q.b": np.zeros((1, cfg.n_actions)),
        }
        for head in range(cfg.heads):
            tensors[f"gat.h{head}.w1"] = _orthogonal(rng, h, 1, 1.0)
            tensors[f"gat.h{head}.w2"] = _orthogonal(rng, h, 1, 1.0)
            tensors[f"gat.h{head}.proj"] = _orthogonal(rng, h, cfg.gat_head_dim, 1.0)
        tensors["gat.out"] = _orthogonal(rng, cfg.heads * cfg.gat_head_dim, h, 1.0)
        self._params = {name: Tensor(arr, requires_grad=True, _copy=False)
                        for name, arr in tensors.items()}

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def named(self) -> list[tuple[str, Tensor]]:
        return sorted(self._params.items())

    def replace(self, updates: dict[str, Tensor]) -> None:
        """Swap in new parameter tensors (used by the optimizer)."""
        for name, t in updates.items():
            if name not in self._params:
                raise KeyError(f"unknown parameter {name!r}")
            self._params[name] = t

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, arr in arrays.items():
            current = self._params[name]
            if arr.shape != current.shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {arr.shape} != "
                    f"expected {current.shape}")
            self._params[name] = Tensor(arr, requires_grad=True)


def encode(params: SharedParams, windows) -> Tensor:
    """Embed stacked history windows: (batch, history_len * obs_dim) -> (batch, hidden)."""
    x = windows if isinstance(windows, Tensor) else Tensor(windows)
    expected = params.cfg.window_dim
    if x.cols != expected:
        raise ShapeError(f"window width {x.cols} != history_len * obs_dim = {expected}")
    h1 = tz.tanh(tz.add(tz.matmul(x, params["enc.w1"]), params["enc.b1"]))
    return tz.tanh(tz.add(tz.matmul(h1, params["enc.w2"]), params["enc.b2"]))


def policy_forward(params: SharedParams, embedding: Tensor) -> Tensor:
    """Categorical action logits, (batch, n_actions)."""
    return tz.add(tz.matmul(embedding, params["policy.w"]), params["policy.b"])


def grouping_forward(params: SharedParams, embedding: Tensor) -> Tensor:
    """Per-agent link log-odds, (batch, group_width)."""
    return tz.add(tz.matmul(embedding, params["group.w"]), params["group.b"])


def value_forward(params: SharedParams, critic_input: Tensor) -> Tensor:
    """State-value estimates, (batch, 1)."""
    return tz.add(tz.matmul(critic_input, params["value.w"]), params["value.b"])


def q_forward(params: SharedParams, critic_input: Tensor) -> Tensor:
    """Per-action value estimates, (batch, n_actions)."""
    return tz.add(tz.matmul(critic_input, params["q.w"]), params["q.b"])


def _softmax_np(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sample_actions(logits_values: np.ndarray, rng: Rng) -> np.ndarray:
    """One categorical draw per row of raw logits."""
    return rng.categorical(_softmax_np(np.asarray(logits_values)))


def greedy_actions(logits_values: np.ndarray) -> np.ndarray:
    return np.asarray(logits_values).argmax(axis=1)


def _one_hot(actions: np.ndarray, n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    out = np.zeros((actions.shape[0], n_actions))
    out[np.arange(actions.shape[0]), actions] = 1.0
    return out


def action_log_probs(logits: Tensor, actions: np.ndarray) -> Tensor:
    """log pi(a | .) of the taken actions, (batch, 1), differentiable."""
    lsm = tz.log_softmax_rows(logits)
    onehot = Tensor(_one_hot(actions, logits.cols), _copy=False)
    return tz.sum_rows(tz.mul(lsm, onehot))


def entropy(logits: Tensor) -> Tensor:
    """Per-row policy entropy, (batch, 1), differentiable."""
    lsm = tz.log_softmax_rows(logits)
    p = tz.exp(lsm)
    return tz.neg(tz.sum_rows(tz.mul(p, lsm)))
