"""Two-armed bandit: the one-step oracle environment for trainer tests."""

from __future__ import annotations

import numpy as np

from .base import InputError

__all__ = ["TwoArmedBandit"]


class TwoArmedBandit:
    """Single agent, one step, constant observation, deterministic arms."""

    def __init__(self, arm_rewards: tuple[float, float] = (0.0, 1.0)):
        self.arm_rewards = tuple(float(r) for r in arm_rewards)
        self.n_agents = 1
        self.obs_dim = 1
        self.n_actions = 2
        self.teams = ((0,),)
        self.episode_limit = 1
        self.steps = 0
        self.alive = np.ones(1, dtype=bool)

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.arm_rewards))

    def reset(self, seed: int) -> np.ndarray:
        self.steps = 0
        return np.ones((1, 1))

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if actions.shape != (1,) or not 0 <= actions[0] < self.n_actions:
            raise InputError(f"bad bandit action {actions}")
        self.steps += 1
        reward = np.array([self.arm_rewards[actions[0]]])
        return np.zeros((1, 1)), reward, True, self.alive.copy()
