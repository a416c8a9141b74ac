"""Rollout collection, advantage estimation, and the paradigm trainers.

Six paradigms wire the critic input: dtde (own embedding), ctde (team
concatenation), and the gtde family (group aggregate) with its ablations
gtde_f (frozen Bernoulli(0.5) matrix drawn at run start), gtde_u (fresh
Bernoulli(0.5) each step, no gradient) and gtde_a (pairwise links). Two
algorithms train them: ppo (clipped surrogate over GAE advantages, state
value critic) and ac (log-prob times Q with a TD(0) Q critic).

Execution is always decentralized: actions come from the policy head on
the agent's own history window. Adjacency matrices exist only on the
training side. During PPO updates the recorded hard matrices are reused
for the critic input while the soft path is recomputed from replayed
noise seeds, so gradients reach the grouping head; advantages stay frozen
at their collection values.

Rollouts run ``num_envs`` environment instances in deterministic
lockstep. Each instance owns a private rng split from the master seed, so
the metric stream is identical for identical config and seed.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import nets
from . import tensor as tz
from .aggregate import (gat_aggregate, gat_aggregate_stack, matmul_aggregate,
                        matmul_aggregate_stack)
from .envs import make_env, winner_from_alive
from .grouping import (AdjacencyMatrix, AdjacencyStack, draw_fixed_hard,
                       sample_adjacency_stack)
from .metrics import MetricRecord
from .nets import HistoryBuffer, NetConfig, SharedParams
from .rng import Rng
from .tensor import ShapeError, Tensor

__all__ = [
    "PARADIGMS",
    "GTDE_FAMILY",
    "ALGORITHMS",
    "AGGREGATIONS",
    "ParadigmConfig",
    "ConfigurationError",
    "NumericAbort",
    "adjacency_mode",
    "drop_mask_enabled",
    "build_critic_input",
    "compute_gae",
    "normalize_advantages",
    "masked_mean",
    "ppo_loss",
    "value_loss",
    "ac_policy_loss",
    "td_targets",
    "td_q_loss",
    "Adam",
    "Trainer",
    "train",
]

PARADIGMS = ("dtde", "ctde", "gtde", "gtde_f", "gtde_u", "gtde_a")
GTDE_FAMILY = ("gtde", "gtde_f", "gtde_u", "gtde_a")
ALGORITHMS = ("ac", "ppo")
AGGREGATIONS = ("matmul", "gat")
DROP_MODES = ("auto", "on", "off")

_ADJ_MODE = {"gtde": "learned", "gtde_f": "fixed",
             "gtde_u": "uniform", "gtde_a": "all_ones"}


class ConfigurationError(ValueError):
    """Invalid paradigm/algorithm wiring or missing inputs for it."""


class NumericAbort(RuntimeError):
    """Training hit non-finite numbers; carries a diagnostic payload."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class ParadigmConfig:
    """Which paradigm wires the critic, plus all hyperparameters.

    Defaults mirror the reference hyperparameter tables (hidden 64,
    5 ppo epochs, 1 minibatch, lr 1e-4, 4 attention heads, 16 rollout
    workers); battle presets override gamma/entropy/value coefficients at
    the config layer.
    """

    paradigm: str = "gtde"
    algorithm: str = "ppo"
    aggregation: str = "matmul"
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 1e-4
    ppo_epochs: int = 5
    minibatches: int = 1
    value_loss_coef: float = 1.0
    entropy_coef: float = 0.01
    temperature: float = 1.0
    drop_prob: float = 0.1
    drop_mask: str = "auto"
    history_len: int = 4
    hidden: int = 64
    heads: int = 4
    gat_head_dim: int = 64
    gat_leaky_scores: bool = False
    grad_clip_norm: float = 10.0
    seed: int = 0
    num_envs: int = 16
    rollout_len: int = 128


def validate_config(cfg: ParadigmConfig) -> None:
    for name, value, allowed in (("paradigm", cfg.paradigm, PARADIGMS),
                                 ("algorithm", cfg.algorithm, ALGORITHMS),
                                 ("aggregation", cfg.aggregation, AGGREGATIONS),
                                 ("drop_mask", cfg.drop_mask, DROP_MODES)):
        if value not in allowed:
            raise ConfigurationError(f"{name} must be one of {allowed}, got {value!r}")
    if not 0.0 < cfg.clip_eps < 1.0:
        raise ConfigurationError(f"clip_eps must be in (0, 1), got {cfg.clip_eps}")
    if cfg.temperature <= 0.0:
        raise ConfigurationError(f"temperature must be positive, got {cfg.temperature}")
    if not 0.0 <= cfg.drop_prob < 1.0:
        raise ConfigurationError(f"drop_prob must be in [0, 1), got {cfg.drop_prob}")
    for name in ("num_envs", "rollout_len", "ppo_epochs", "minibatches",
                 "history_len", "hidden", "heads"):
        if getattr(cfg, name) < 1:
            raise ConfigurationError(f"{name} must be >= 1")


def adjacency_mode(paradigm: str) -> Optional[str]:
    """Sampling mode for the gtde family; None for dtde/ctde."""
    return _ADJ_MODE.get(paradigm)


def drop_mask_enabled(cfg: ParadigmConfig) -> bool:
    """auto resolves to on for gat aggregation, off for matmul."""
    if cfg.drop_mask == "auto":
        return cfg.aggregation == "gat"
    return cfg.drop_mask == "on"


# -- critic wiring -------------------------------------------------------


def build_critic_input(paradigm: str, embeddings: Tensor,
                       adjacency: Optional[AdjacencyMatrix] = None,
                       aggregation: str = "matmul",
                       params: Optional[SharedParams] = None,
                       gat_leaky_scores: bool = False) -> Tensor:
    """Critic input rows for one agent block (one env, one team, one step)."""
    if paradigm == "dtde":
        return embeddings
    if paradigm == "ctde":
        n = embeddings.rows
        joint = tz.reshape(embeddings, 1, n * embeddings.cols)
        return tz.matmul(tz.ones(n, 1), joint)
    if paradigm in GTDE_FAMILY:
        if adjacency is None:
            raise ConfigurationError(f"paradigm {paradigm!r} requires an adjacency matrix")
        if aggregation == "gat":
            if params is None:
                raise ConfigurationError("gat aggregation requires shared params")
            return gat_aggregate(adjacency, embeddings, params,
                                 leaky_scores=gat_leaky_scores).matrix
        return matmul_aggregate(adjacency, embeddings).matrix
    raise ConfigurationError(f"unknown paradigm {paradigm!r}")


def critic_input_width(paradigm: str, hidden: int, team_size: int) -> int:
    return team_size * hidden if paradigm == "ctde" else hidden


# -- advantage estimation and losses -------------------------------------


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over leading time axis.

    ``values`` carries one extra leading slot: the bootstrap value of the
    state after the final transition. ``dones`` broadcasts against
    ``rewards`` and zeroes the bootstrap across episode ends.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    steps = rewards.shape[0]
    if values.shape[0] != steps + 1:
        raise ShapeError(
            f"values must have {steps + 1} leading entries, got {values.shape[0]}")
    if dones.shape[0] != steps:
        raise ShapeError(
            f"dones must have {steps} leading entries, got {dones.shape[0]}")
    advantages = np.zeros_like(rewards)
    carried = 0.0
    for t in range(steps - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        carried = delta + gamma * lam * nonterminal * carried
        advantages[t] = carried
    returns = advantages + values[:-1]
    return advantages, returns


def normalize_advantages(advantages: np.ndarray, alive: np.ndarray,
                         eps: float = 1e-8) -> np.ndarray:
    """Standardize to mean 0 / std 1 over alive entries."""
    live = advantages[np.asarray(alive, dtype=bool)]
    return (advantages - live.mean()) / (live.std() + eps)


def _mask_column(mask: np.ndarray) -> np.ndarray:
    return np.asarray(mask, dtype=np.float64).reshape(-1, 1)


def masked_mean(values: Tensor, alive: np.ndarray) -> Tensor:
    """Mean of a (batch, 1) column over alive entries."""
    mask = _mask_column(alive)
    count = mask.sum()
    if count == 0:
        raise ValueError("masked_mean over zero alive entries")
    return tz.scale(tz.sum_all(tz.mul(values, Tensor(mask, _copy=False))), 1.0 / count)


def ppo_loss(new_log_probs: Tensor, old_log_probs: np.ndarray,
             advantages: np.ndarray, clip_eps: float,
             alive: np.ndarray) -> Tensor:
    """Clipped-surrogate policy loss (to minimize) over alive entries."""
    ratio = tz.exp(tz.sub(new_log_probs, Tensor(old_log_probs)))
    adv = Tensor(np.asarray(advantages, dtype=np.float64).reshape(-1, 1))
    unclipped = tz.mul(ratio, adv)
    clipped = tz.mul(tz.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv)
    return tz.neg(masked_mean(tz.minimum(unclipped, clipped), alive))


def value_loss(values: Tensor, returns: np.ndarray, alive: np.ndarray) -> Tensor:
    diff = tz.sub(values, Tensor(np.asarray(returns, dtype=np.float64).reshape(-1, 1)))
    return masked_mean(tz.mul(diff, diff), alive)


def ac_policy_loss(log_probs: Tensor, critic_signal: np.ndarray,
                   alive: np.ndarray) -> Tensor:
    """-mean(log pi(a) * Q(taken)) with the critic signal detached."""
    signal = Tensor(np.asarray(critic_signal, dtype=np.float64).reshape(-1, 1))
    return tz.neg(masked_mean(tz.mul(log_probs, signal), alive))


def td_targets(rewards: np.ndarray, next_q: np.ndarray, dones: np.ndarray,
               gamma: float) -> np.ndarray:
    """r + gamma * Q^{t+1}, with the bootstrap masked across episode ends."""
    return rewards + gamma * (1.0 - dones) * next_q


def td_q_loss(q_taken: Tensor, targets: np.ndarray, alive: np.ndarray) -> Tensor:
    """Mean squared TD error of the taken action's Q over alive entries."""
    diff = tz.sub(q_taken, Tensor(np.asarray(targets, dtype=np.float64).reshape(-1, 1)))
    return masked_mean(tz.mul(diff, diff), alive)


# -- optimizer ------------------------------------------------------------


class Adam:
    """Adam over the shared parameter set, with global-norm gradient clipping."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: SharedParams, grads, clip_norm: float = 0.0) -> None:
        named = params.named()
        grad_arrays: dict[str, np.ndarray] = {}
        for name, p in named:
            try:
                grad_arrays[name] = grads.wrt(p).data
            except KeyError:
                grad_arrays[name] = np.zeros(p.shape)
        if clip_norm and clip_norm > 0.0:
            total = np.sqrt(sum(float((g * g).sum()) for g in grad_arrays.values()))
            if total > clip_norm:
                factor = clip_norm / total
                grad_arrays = {k: g * factor for k, g in grad_arrays.items()}
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        updates: dict[str, Tensor] = {}
        for name, p in named:
            g = grad_arrays[name]
            m = self._m.get(name)
            v = self._v.get(name)
            m = (1.0 - self.beta1) * g if m is None else self.beta1 * m + (1.0 - self.beta1) * g
            v = (1.0 - self.beta2) * g * g if v is None else self.beta2 * v + (1.0 - self.beta2) * g * g
            self._m[name] = m
            self._v[name] = v
            new = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            updates[name] = Tensor(new, requires_grad=True, _copy=False)
        params.replace(updates)


# -- trainer ---------------------------------------------------------------


@dataclass
class _Rollout:
    windows: np.ndarray      # (T+1, E, n, window_dim)
    actions: np.ndarray      # (T+1, E, n)
    log_probs: np.ndarray    # (T+1, E, n)
    values: np.ndarray       # (T+1, E, n)
    rewards: np.ndarray      # (T, E, n)
    dones: np.ndarray        # (T, E)
    alive: np.ndarray        # (T+1, E, n) bool, at action time
    hard_raw: np.ndarray     # (T+1, E, teams, nt, nt)
    hard_final: np.ndarray   # (T+1, E, teams, nt, nt)
    adj_seeds: np.ndarray    # (T+1, E, teams) uint64


class Trainer:
    """Lockstep rollout collection alternating with parameter updates."""

    def __init__(self, config: ParadigmConfig, env_name: str,
                 env_overrides: Optional[dict] = None):
        validate_config(config)
        self.config = config
        self.env_name = env_name
        self.envs = [make_env(env_name, **(env_overrides or {}))
                     for _ in range(config.num_envs)]
        env0 = self.envs[0]
        self.n = env0.n_agents
        self.teams = env0.teams
        team_sizes = {len(t) for t in self.teams}
        if config.paradigm != "dtde" and len(team_sizes) != 1:
            raise ConfigurationError(
                f"paradigm {config.paradigm!r} needs equal team sizes, got {sorted(team_sizes)}")
        for members in self.teams:
            if tuple(members) != tuple(range(members[0], members[-1] + 1)):
                raise ConfigurationError("team member ids must be contiguous")
        self.team_size = len(self.teams[0])
        self.net_cfg = NetConfig(
            obs_dim=env0.obs_dim, n_actions=env0.n_actions,
            group_width=self.team_size,
            critic_in_dim=critic_input_width(config.paradigm, config.hidden,
                                             self.team_size),
            history_len=config.history_len, hidden=config.hidden,
            heads=config.heads, gat_head_dim=config.gat_head_dim)

        master = Rng(config.seed)
        self.master = master
        self.params = SharedParams(self.net_cfg, master.split(1))
        self.fixed_hard = (draw_fixed_hard(self.team_size, master.split(2))
                           if config.paradigm == "gtde_f" else None)
        self.worker_rngs = [master.split(100 + i) for i in range(config.num_envs)]
        self.opt = Adam(config.lr)
        self.adj_mode = adjacency_mode(config.paradigm)
        self.drop_on = drop_mask_enabled(config)

        self.histories = [HistoryBuffer(self.n, env0.obs_dim, config.history_len)
                          for _ in self.envs]
        for e, env in enumerate(self.envs):
            obs = env.reset(self.worker_rngs[e].child_seed())
            self.histories[e].push(obs)
        self._alive_now = [env.alive.copy() for env in self.envs]

        self.iteration = 0
        self.env_steps = 0
        self._ep_team_return = np.zeros((config.num_envs, len(self.teams)))
        self._recent_returns: deque[float] = deque(maxlen=100)
        self._recent_wins: deque[float] = deque(maxlen=100)

    # -- shared forward helpers ------------------------------------------

    def _adjacency_stack(self, logodds: Optional[Tensor], seeds: np.ndarray,
                         hard_raw_override: Optional[np.ndarray] = None
                         ) -> AdjacencyStack:
        return sample_adjacency_stack(
            logodds, self.config.temperature, [int(s) for s in seeds],
            mode=self.adj_mode, n=self.team_size, fixed_hard=self.fixed_hard,
            drop_prob=self.config.drop_prob if self.drop_on else None,
            hard_raw_override=hard_raw_override)

    def _stacked_critic_input(self, emb: Tensor,
                              stack: Optional[AdjacencyStack]) -> Tensor:
        """Critic input rows for a stack of (step, env, team) blocks.

        Team blocks are contiguous row ranges of ``emb`` in stack order,
        so the batched aggregation ops apply directly.
        """
        cfg = self.config
        if cfg.paradigm == "dtde":
            return emb
        if cfg.paradigm == "ctde":
            nt = self.team_size
            joint = tz.reshape(emb, emb.rows // nt, nt * emb.cols)
            return tz.block_matmul(tz.ones(emb.rows, 1), joint, nt, 1)
        if stack is None:
            raise ConfigurationError(
                f"paradigm {cfg.paradigm!r} requires an adjacency stack")
        if cfg.aggregation == "gat":
            return gat_aggregate_stack(stack, emb, self.params,
                                       leaky_scores=cfg.gat_leaky_scores)
        return matmul_aggregate_stack(stack, emb)

    # -- collection --------------------------------------------------------

    def collect(self) -> _Rollout:
        cfg = self.config
        T, E, n = cfg.rollout_len, cfg.num_envs, self.n
        nt, n_teams = self.team_size, len(self.teams)
        wdim = self.net_cfg.window_dim
        needs_adj = self.adj_mode is not None

        roll = _Rollout(
            windows=np.zeros((T + 1, E, n, wdim)),
            actions=np.zeros((T + 1, E, n), dtype=np.int64),
            log_probs=np.zeros((T + 1, E, n)),
            values=np.zeros((T + 1, E, n)),
            rewards=np.zeros((T, E, n)),
            dones=np.zeros((T, E)),
            alive=np.zeros((T + 1, E, n), dtype=bool),
            hard_raw=np.zeros((T + 1, E, n_teams, nt, nt), dtype=np.uint8),
            hard_final=np.zeros((T + 1, E, n_teams, nt, nt), dtype=np.uint8),
            adj_seeds=np.zeros((T + 1, E, n_teams), dtype=np.uint64),
        )

        for t in range(T + 1):
            for e in range(E):
                roll.windows[t, e] = self.histories[e].window_matrix()
                roll.alive[t, e] = self._alive_now[e]
            x = Tensor(roll.windows[t].reshape(E * n, wdim))
            emb = nets.encode(self.params, x)
            logits = nets.policy_forward(self.params, emb)
            log_probs = tz.log_softmax_rows(logits).data
            for e in range(E):
                block = logits.data[e * n:(e + 1) * n]
                roll.actions[t, e] = nets.sample_actions(block, self.worker_rngs[e])
            flat_actions = roll.actions[t].reshape(-1)
            roll.log_probs[t] = log_probs[np.arange(E * n), flat_actions].reshape(E, n)

            stack: Optional[AdjacencyStack] = None
            if needs_adj:
                for e in range(E):
                    for k in range(n_teams):
                        roll.adj_seeds[t, e, k] = self.worker_rngs[e].child_seed()
                logodds = (nets.grouping_forward(self.params, emb)
                           if self.adj_mode == "learned" else None)
                stack = self._adjacency_stack(logodds, roll.adj_seeds[t].reshape(-1))
                roll.hard_raw[t] = stack.hard_raw.reshape(E, n_teams, nt, nt)
                roll.hard_final[t] = stack.hard.reshape(E, n_teams, nt, nt)

            if cfg.algorithm == "ppo":
                critic_in = self._stacked_critic_input(emb, stack)
                roll.values[t] = nets.value_forward(
                    self.params, critic_in).data.reshape(E, n)

            if t == T:
                break

            for e in range(E):
                env = self.envs[e]
                obs, rewards, done, alive = env.step(roll.actions[t, e])
                roll.rewards[t, e] = rewards
                roll.dones[t, e] = float(done)
                for k, members in enumerate(self.teams):
                    self._ep_team_return[e, k] += rewards[members[0]]
                self.histories[e].push(obs)
                self._alive_now[e] = alive
                if done:
                    self._finish_episode(e, alive)
            self.env_steps += E
        return roll

    def _finish_episode(self, e: int, alive: np.ndarray) -> None:
        self._recent_returns.append(float(self._ep_team_return[e].mean()))
        if len(self.teams) > 1:
            winner = winner_from_alive(self.teams, alive)
            self._recent_wins.append(0.5 if winner is None else 1.0 - winner)
        self._ep_team_return[e] = 0.0
        env = self.envs[e]
        obs = env.reset(self.worker_rngs[e].child_seed())
        self.histories[e].reset()
        self.histories[e].push(obs)
        self._alive_now[e] = env.alive.copy()

    # -- updates -----------------------------------------------------------

    def _update_stack(self, roll: _Rollout, glogits: Optional[Tensor],
                      steps: slice) -> Optional[AdjacencyStack]:
        """Adjacency stack for update epochs over ``steps`` of the rollout.

        Learned mode replays the recorded noise seeds and substitutes the
        recorded raw hard sample, so the forward critic input matches
        collection while gradients flow through the recomputed soft path.
        """
        if self.adj_mode is None:
            return None
        nt = self.team_size
        seeds = roll.adj_seeds[steps].reshape(-1)
        hard_raw = roll.hard_raw[steps].reshape(-1, nt).astype(np.float64)
        return self._adjacency_stack(glogits, seeds, hard_raw_override=hard_raw)

    def _update_ppo(self, roll: _Rollout) -> dict[str, float]:
        cfg = self.config
        T, E, n = cfg.rollout_len, cfg.num_envs, self.n
        advantages, returns = compute_gae(
            roll.rewards, roll.values, roll.dones[:, :, None],
            cfg.gamma, cfg.gae_lambda)
        alive = roll.alive[:T]
        advantages = normalize_advantages(advantages, alive)

        flat_alive = alive.reshape(-1)
        flat_actions = roll.actions[:T].reshape(-1)
        flat_old_lp = roll.log_probs[:T].reshape(-1, 1)
        flat_adv = advantages.reshape(-1, 1)
        flat_ret = returns.reshape(-1, 1)
        windows = roll.windows[:T].reshape(T * E * n, -1)

        # Minibatches split whole timesteps so team blocks stay intact.
        chunk = -(-T // cfg.minibatches)
        stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        passes = 0
        for _ in range(cfg.ppo_epochs):
            for t0 in range(0, T, chunk):
                t1 = min(t0 + chunk, T)
                rows = slice(t0 * E * n, t1 * E * n)
                with tz.Tape() as tape:
                    emb = nets.encode(self.params, Tensor(windows[rows]))
                    logits = nets.policy_forward(self.params, emb)
                    new_lp = nets.action_log_probs(logits, flat_actions[rows])
                    ent = nets.entropy(logits)
                    glogits = (nets.grouping_forward(self.params, emb)
                               if self.adj_mode == "learned" else None)
                    stack = self._update_stack(roll, glogits, slice(t0, t1))
                    critic_in = self._stacked_critic_input(emb, stack)
                    values = nets.value_forward(self.params, critic_in)

                    mask = flat_alive[rows]
                    p_loss = ppo_loss(new_lp, flat_old_lp[rows], flat_adv[rows],
                                      cfg.clip_eps, mask)
                    v_loss = value_loss(values, flat_ret[rows], mask)
                    ent_mean = masked_mean(ent, mask)
                    total = tz.add(tz.add(p_loss, tz.scale(v_loss, cfg.value_loss_coef)),
                                   tz.scale(ent_mean, -cfg.entropy_coef))
                    grads = tape.backward(total)
                    self.opt.step(self.params, grads, cfg.grad_clip_norm)
                stats["policy_loss"] += p_loss.item()
                stats["value_loss"] += v_loss.item()
                stats["entropy"] += ent_mean.item()
                passes += 1
        return {k: v / passes for k, v in stats.items()}

    def _update_ac(self, roll: _Rollout) -> dict[str, float]:
        cfg = self.config
        T, E, n = cfg.rollout_len, cfg.num_envs, self.n
        rows_t = T * E * n  # rows for t < T; the tail rows only bootstrap
        windows = roll.windows.reshape((T + 1) * E * n, -1)
        actions = roll.actions.reshape(-1)
        alive = roll.alive[:T].reshape(-1)

        with tz.Tape() as tape:
            emb = nets.encode(self.params, Tensor(windows))
            logits = nets.policy_forward(self.params, emb)
            log_probs = nets.action_log_probs(logits, actions)
            ent = nets.entropy(logits)
            glogits = (nets.grouping_forward(self.params, emb)
                       if self.adj_mode == "learned" else None)
            stack = self._update_stack(roll, glogits, slice(0, T + 1))
            critic_in = self._stacked_critic_input(emb, stack)
            q_all = nets.q_forward(self.params, critic_in)
            onehot = np.zeros((q_all.rows, q_all.cols))
            onehot[np.arange(q_all.rows), actions] = 1.0
            q_taken = tz.sum_rows(tz.mul(q_all, Tensor(onehot, _copy=False)))

            q_values = q_taken.data.reshape(T + 1, E, n)
            targets = td_targets(roll.rewards, q_values[1:],
                                 roll.dones[:, :, None], cfg.gamma).reshape(-1, 1)
            q_head = tz.slice_rows(q_taken, 0, rows_t)
            lp_head = tz.slice_rows(log_probs, 0, rows_t)
            ent_head = tz.slice_rows(ent, 0, rows_t)

            td = td_q_loss(q_head, targets, alive)
            p_loss = ac_policy_loss(lp_head, q_taken.data[:rows_t], alive)
            ent_mean = masked_mean(ent_head, alive)
            total = tz.add(tz.add(p_loss, tz.scale(td, cfg.value_loss_coef)),
                           tz.scale(ent_mean, -cfg.entropy_coef))
            grads = tape.backward(total)
            self.opt.step(self.params, grads, cfg.grad_clip_norm)
        return {"policy_loss": p_loss.item(), "value_loss": td.item(),
                "entropy": ent_mean.item()}

    # -- metrics -------------------------------------------------------------

    def _avg_node_information(self, roll: _Rollout) -> float:
        cfg = self.config
        T, E = cfg.rollout_len, cfg.num_envs
        if cfg.paradigm == "dtde":
            return 1.0
        total = 0.0
        count = 0
        for t in range(T):
            for e in range(E):
                for k, members in enumerate(self.teams):
                    alive = roll.alive[t, e, list(members)].astype(np.float64)
                    live = int(alive.sum())
                    if live == 0:
                        continue
                    if cfg.paradigm == "ctde":
                        total += live * live
                    else:
                        hard = roll.hard_final[t, e, k].astype(np.float64)
                        total += float(((hard * alive[None, :]).sum(axis=1) * alive).sum())
                    count += live
        return total / count if count else 1.0

    def run(self, iterations: int,
            on_metrics: Optional[Callable[[MetricRecord], None]] = None,
            on_checkpoint: Optional[Callable[["Trainer"], None]] = None,
            checkpoint_every: int = 0) -> list[MetricRecord]:
        records = []
        for _ in range(iterations):
            started = time.perf_counter()
            try:
                roll = self.collect()
                losses = (self._update_ppo(roll) if self.config.algorithm == "ppo"
                          else self._update_ac(roll))
            except tz.NumericError as err:
                raise NumericAbort(
                    f"non-finite numbers at iteration {self.iteration}: {err}",
                    diagnostics={"iteration": self.iteration,
                                 "env_steps": self.env_steps,
                                 "paradigm": self.config.paradigm,
                                 "algorithm": self.config.algorithm,
                                 "error": str(err)}) from err
            if self._recent_returns:
                mean_return = float(np.mean(self._recent_returns))
            else:
                mean_return = float(self._ep_team_return.mean())
            record = MetricRecord(
                iteration=self.iteration,
                env_steps=self.env_steps,
                mean_episode_reward=mean_return,
                win_rate=(float(np.mean(self._recent_wins))
                          if self._recent_wins else None),
                avg_node_information=self._avg_node_information(roll),
                policy_loss=losses["policy_loss"],
                value_loss=losses["value_loss"],
                entropy=losses["entropy"],
                wall_clock_s=time.perf_counter() - started)
            records.append(record)
            if on_metrics is not None:
                on_metrics(record)
            self.iteration += 1
            if (on_checkpoint is not None and checkpoint_every > 0
                    and self.iteration % checkpoint_every == 0):
                on_checkpoint(self)
        return records


def train(config: ParadigmConfig, env_name: str, iterations: int,
          env_overrides: Optional[dict] = None,
          on_metrics: Optional[Callable[[MetricRecord], None]] = None,
          on_checkpoint: Optional[Callable[[Trainer], None]] = None,
          checkpoint_every: int = 0) -> tuple[Trainer, list[MetricRecord]]:
    """Train one run and return the trainer plus its metric records."""
    trainer = Trainer(config, env_name, env_overrides)
    records = trainer.run(iterations, on_metrics=on_metrics,
                          on_checkpoint=on_checkpoint,
                          checkpoint_every=checkpoint_every)
    return trainer, records
