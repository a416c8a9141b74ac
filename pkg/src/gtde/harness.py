"""Run orchestration and evaluation protocols.

Training writes metrics (jsonl + csv mirror) and periodic checkpoints
into the run directory. Evaluation runs the decentralized execution path
only -- policy head on own history -- and asserts that no adjacency
matrix is constructed while it runs. Crossplay pits two checkpoints
against each other with alternating side assignment over a shared seed
list, so winrate(A, B) + winrate(B, A) = 1 under draw accounting.
Group inspection re-enables the grouping pipeline (it is a training-side
analysis) and exports per-timestep assignments plus link frequencies.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import grouping as grp
from . import nets
from .algos import (GTDE_FAMILY, NumericAbort, Trainer, adjacency_mode,
                    critic_input_width, train)
from .checkpoint import CheckpointData, load_checkpoint, save_checkpoint
from .config import RunConfig, run_config_from_flat
from .envs import make_env, winner_from_alive
from .grouping import apply_self_link_mask, draw_fixed_hard, sample_adjacency
from .metrics import MetricsWriter
from .nets import HistoryBuffer, NetConfig, SharedParams
from .rng import Rng
from .tensor import ShapeError, Tensor

__all__ = [
    "CompatibilityError",
    "ProtocolError",
    "EvalSummary",
    "run_training",
    "load_policy",
    "evaluate",
    "crossplay",
    "ablate",
    "inspect_groups",
]


class CompatibilityError(ValueError):
    """Checkpoint and environment dimensions do not match."""


class ProtocolError(ValueError):
    """Verb applied to an incompatible checkpoint or environment."""


# -- training ---------------------------------------------------------------


def run_training(run_cfg: RunConfig) -> dict:
    """Train per the run config; returns paths and the final metric record."""
    out_dir = Path(run_cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_echo = run_cfg.as_flat_dict()
    paradigm_cfg = run_cfg.paradigm_config()

    def write_checkpoint(trainer: Trainer) -> Path:
        path = out_dir / f"checkpoint_{trainer.iteration}.ckpt"
        save_checkpoint(path, config_echo, trainer.iteration,
                        trainer.master.state(), trainer.params)
        return path

    writer = MetricsWriter(out_dir)
    try:
        trainer, records = train(
            paradigm_cfg, run_cfg.env, run_cfg.iterations,
            env_overrides=run_cfg.env_overrides,
            on_metrics=writer.write,
            on_checkpoint=write_checkpoint,
            checkpoint_every=run_cfg.checkpoint_every)
    except NumericAbort as err:
        diag_path = out_dir / "abort_diagnostics.json"
        diag_path.write_text(json.dumps(err.diagnostics, indent=2, sort_keys=True),
                             encoding="utf-8")
        err.diagnostics["path"] = str(diag_path)
        raise
    finally:
        writer.close()
    final_ckpt = write_checkpoint(trainer)
    return {
        "out_dir": str(out_dir),
        "metrics_jsonl": str(writer.jsonl_path),
        "metrics_csv": str(writer.csv_path),
        "checkpoint": str(final_ckpt),
        "final_record": records[-1] if records else None,
    }


# -- checkpoint-backed policies ----------------------------------------------


@dataclass
class LoadedPolicy:
    params: SharedParams
    run_cfg: RunConfig
    checkpoint: CheckpointData


def load_policy(checkpoint_path: str | Path, env) -> LoadedPolicy:
    """Rebuild shared parameters from a checkpoint against a live env."""
    ckpt = load_checkpoint(checkpoint_path)
    flat = {k: v for k, v in ckpt.config.items()}
    run_cfg = run_config_from_flat(flat)
    cfg = run_cfg.paradigm_config()
    team_size = len(env.teams[0])
    net_cfg = NetConfig(
        obs_dim=env.obs_dim, n_actions=env.n_actions, group_width=team_size,
        critic_in_dim=critic_input_width(cfg.paradigm, cfg.hidden, team_size),
        history_len=cfg.history_len, hidden=cfg.hidden,
        heads=cfg.heads, gat_head_dim=cfg.gat_head_dim)
    params = SharedParams(net_cfg, Rng(0))
    try:
        params.load_arrays(ckpt.params)
    except (ShapeError, KeyError) as err:
        raise CompatibilityError(
            f"checkpoint does not fit environment dims "
            f"(obs_dim={env.obs_dim}, n_actions={env.n_actions}): {err}") from err
    return LoadedPolicy(params=params, run_cfg=run_cfg, checkpoint=ckpt)


def _select_actions(params: SharedParams, windows: np.ndarray, mode: str,
                    rng: Optional[Rng]) -> np.ndarray:
    emb = nets.encode(params, Tensor(windows))
    logits = nets.policy_forward(params, emb).data
    if mode == "greedy":
        return nets.greedy_actions(logits)
    return nets.sample_actions(logits, rng)


# -- evaluation ---------------------------------------------------------------


@dataclass
class EvalSummary:
    episodes: int
    mode: str
    mean_reward: float
    std_reward: float
    win_rate: Optional[float]
    avg_node_information: Optional[float]  # None: execution builds no groups

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(checkpoint_path: str | Path, env_name: str, episodes: int = 200,
             mode: str = "greedy", seed: int = 10_000,
             env_overrides: Optional[dict] = None) -> EvalSummary:
    """Decentralized-execution evaluation of a checkpointed policy."""
    if mode not in ("greedy", "sample"):
        raise ProtocolError(f"eval mode must be greedy or sample, got {mode!r}")
    env = make_env(env_name, **(env_overrides or {}))
    policy = load_policy(checkpoint_path, env)
    cfg = policy.run_cfg.paradigm_config()
    rng = Rng(seed)
    buffer = HistoryBuffer(env.n_agents, env.obs_dim, cfg.history_len)

    samples_before = grp.adjacency_sample_count()
    returns = []
    wins = []
    for _ in range(episodes):
        obs = env.reset(rng.child_seed())
        buffer.reset()
        buffer.push(obs)
        team_return = np.zeros(len(env.teams))
        done = False
        while not done:
            actions = _select_actions(policy.params, buffer.window_matrix(),
                                      mode, rng)
            obs, rewards, done, alive = env.step(actions)
            buffer.push(obs)
            for k, members in enumerate(env.teams):
                team_return[k] += rewards[members[0]]
        returns.append(float(team_return.mean()))
        if len(env.teams) > 1:
            winner = winner_from_alive(env.teams, alive)
            wins.append(0.5 if winner is None else 1.0 - winner)
    if grp.adjacency_sample_count() != samples_before:
        raise ProtocolError(
            "execution purity violated: evaluation constructed an adjacency matrix")
    return EvalSummary(
        episodes=episodes, mode=mode,
        mean_reward=float(np.mean(returns)),
        std_reward=float(np.std(returns)),
        win_rate=float(np.mean(wins)) if wins else None,
        avg_node_information=None)


def crossplay(checkpoint_a: str | Path, checkpoint_b: str | Path, env_name: str,
              episodes: int = 200, mode: str = "sample", seed: int = 20_000,
              env_overrides: Optional[dict] = None) -> dict:
    """Side A's win rate against side B; draws count 0.5.

    Each shared seed is played twice with side assignment swapped (plus a
    final single game when ``episodes`` is odd), making the game multiset
    symmetric in the two checkpoints.
    """
    env = make_env(env_name, **(env_overrides or {}))
    if len(env.teams) != 2:
        raise ProtocolError(
            f"crossplay needs a two-team environment, {env_name!r} has {len(env.teams)}")
    policy_a = load_policy(checkpoint_a, env)
    policy_b = load_policy(checkpoint_b, env)
    hist_a = HistoryBuffer(env.n_agents, env.obs_dim,
                           policy_a.run_cfg.paradigm_config().history_len)
    hist_b = HistoryBuffer(env.n_agents, env.obs_dim,
                           policy_b.run_cfg.paradigm_config().history_len)
    rng = Rng(seed)

    games = []  # (episode seed, team index policy A controls)
    for _ in range((episodes + 1) // 2):
        episode_seed = rng.child_seed()
        games.append((episode_seed, 0))
        games.append((episode_seed, 1))
    games = games[:episodes]

    score_a = 0.0
    wins_a = wins_b = draws = 0
    for episode_seed, side_a in games:
        obs = env.reset(episode_seed)
        hist_a.reset()
        hist_b.reset()
        hist_a.push(obs)
        hist_b.push(obs)
        done = False
        while not done:
            actions = np.zeros(env.n_agents, dtype=np.int64)
            for k, members in enumerate(env.teams):
                policy, hist = ((policy_a, hist_a) if k == side_a
                                else (policy_b, hist_b))
                rows = list(members)
                block = hist.window_matrix()[rows]
                actions[rows] = _select_actions(policy.params, block, mode, rng)
            obs, _, done, alive = env.step(actions)
            hist_a.push(obs)
            hist_b.push(obs)
        winner = winner_from_alive(env.teams, alive)
        if winner is None:
            draws += 1
            score_a += 0.5
        elif winner == side_a:
            wins_a += 1
            score_a += 1.0
        else:
            wins_b += 1
    return {
        "win_rate_a": score_a / len(games),
        "episodes": len(games),
        "wins_a": wins_a,
        "wins_b": wins_b,
        "draws": draws,
    }


# -- ablation sweeps -----------------------------------------------------------


def ablate(base_cfg: RunConfig, paradigms: list[str], seeds: list[int]) -> dict:
    """Train every (paradigm, seed) pair and aggregate final metrics."""
    runs = []
    for paradigm in paradigms:
        for seed in seeds:
            values = dict(base_cfg.values)
            values["paradigm"] = paradigm
            values["seed"] = seed
            values["out_dir"] = str(Path(base_cfg.out_dir) / f"{paradigm}_seed{seed}")
            result = run_training(RunConfig(values=values,
                                            env_overrides=dict(base_cfg.env_overrides)))
            final = result["final_record"]
            runs.append({
                "paradigm": paradigm,
                "seed": seed,
                "out_dir": result["out_dir"],
                "mean_episode_reward": final.mean_episode_reward,
                "win_rate": final.win_rate,
                "avg_node_information": final.avg_node_information,
            })
    summary = []
    for paradigm in paradigms:
        rows = [r for r in runs if r["paradigm"] == paradigm]
        rewards = np.array([r["mean_episode_reward"] for r in rows])
        info = np.array([r["avg_node_information"] for r in rows])
        summary.append({
            "paradigm": paradigm,
            "seeds": len(rows),
            "reward_mean": float(rewards.mean()),
            "reward_std": float(rewards.std()),
            "avg_node_information_mean": float(info.mean()),
        })
    return {"runs": runs, "summary": summary}


def write_ablation_csv(path: str | Path, result: dict) -> None:
    lines = ["paradigm,seeds,reward_mean,reward_std,avg_node_information_mean"]
    for row in result["summary"]:
        lines.append(
            f"{row['paradigm']},{row['seeds']},{row['reward_mean']!r},"
            f"{row['reward_std']!r},{row['avg_node_information_mean']!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- group inspection ------------------------------------------------------------


def inspect_groups(checkpoint_path: str | Path, env_name: str, episodes: int,
                   out_dir: str | Path, seed: int = 30_000, mode: str = "greedy",
                   env_overrides: Optional[dict] = None) -> dict:
    """Export per-timestep group assignments for a gtde-family checkpoint.

    Actions stay decentralized; the grouping pipeline runs alongside to
    record assignments (drop mask off, for determinism). Writes one
    ``groups_<episode>.jsonl`` per episode plus a summary json with the
    per-agent link-frequency matrix.
    """
    env = make_env(env_name, **(env_overrides or {}))
    policy = load_policy(checkpoint_path, env)
    cfg = policy.run_cfg.paradigm_config()
    if cfg.paradigm not in GTDE_FAMILY:
        raise ProtocolError(
            f"group inspection needs a gtde-family checkpoint, got {cfg.paradigm!r}")
    adj_mode = adjacency_mode(cfg.paradigm)
    team_size = len(env.teams[0])
    # gtde_f's frozen matrix re-derives from the run seed, as at training time.
    fixed_hard = (draw_fixed_hard(team_size, Rng(cfg.seed).split(2))
                  if cfg.paradigm == "gtde_f" else None)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    buffer = HistoryBuffer(env.n_agents, env.obs_dim, cfg.history_len)

    link_counts = np.zeros((team_size, team_size))
    owner_steps = np.zeros(team_size)
    all_assignments: list[grp.GroupAssignment] = []
    all_alive: list[np.ndarray] = []
    for episode in range(episodes):
        obs = env.reset(rng.child_seed())
        buffer.reset()
        buffer.push(obs)
        episode_assignments = []
        episode_alive = []
        done = False
        while not done:
            alive_now = env.alive.copy()
            windows = buffer.window_matrix()
            for k, members in enumerate(env.teams):
                rows = list(members)
                emb = nets.encode(policy.params, Tensor(windows[rows]))
                logodds = nets.grouping_forward(policy.params, emb)
                adj = sample_adjacency(logodds, cfg.temperature, rng,
                                       mode=adj_mode, fixed_hard=fixed_hard)
                adj = apply_self_link_mask(adj)
                assignment = grp.extract_groups(adj)
                episode_assignments.append(assignment)
                episode_alive.append(alive_now[rows])
                team_alive = alive_now[rows]
                link_counts[team_alive] += adj.hard.data[team_alive]
                owner_steps[team_alive] += 1.0
            actions = _select_actions(policy.params, windows, mode, rng)
            obs, _, done, _ = env.step(actions)
            buffer.push(obs)
        records = []
        for record in grp.group_records(episode, episode_assignments, episode_alive):
            records.append(json.dumps(record, sort_keys=True))
        (out_dir / f"groups_{episode}.jsonl").write_text(
            "\n".join(records) + "\n", encoding="utf-8")
        all_assignments.extend(episode_assignments)
        all_alive.extend(episode_alive)

    frequency = link_counts / np.maximum(owner_steps[:, None], 1.0)
    summary = {
        "episodes": episodes,
        "paradigm": cfg.paradigm,
        "avg_node_information": grp.avg_node_information(all_assignments, all_alive),
        "link_frequency": frequency.tolist(),
    }
    (out_dir / "groups_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return summary
