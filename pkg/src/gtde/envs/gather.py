"""Gather-lite: one team collects food under scarcity.

Food pieces take five attacks to consume; each attack on food pays the
attack-food reward and the consuming hit removes it. Agents can kill each
other with a single attack (scarcity conflict), costing the team the dead
penalty. The episode ends when all food is gone or at the step cap.
Reward constants follow the source scenario's gather column.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from .grid import ATTACK_DIRS, N_MOVE_ACTIONS, GridWorld

__all__ = ["GatherLiteEnv"]


class GatherLiteEnv(GridWorld):

    STEP_REWARD = -0.01
    ATTACK_PENALTY = -0.1
    DEAD_PENALTY = -1.0
    ATTACK_FOOD_REWARD = 0.5
    FOOD_HITS = 5

    def __init__(self, n_agents: int = 24, width: int = 13, height: int = 13,
                 n_food: int = 30, episode_limit: int = 400, obs_radius: int = 3):
        super().__init__(width=width, height=height, n_agents=n_agents,
                         teams=(tuple(range(n_agents)),),
                         n_actions=N_MOVE_ACTIONS + len(ATTACK_DIRS),
                         episode_limit=episode_limit, obs_radius=obs_radius)
        self.n_food = n_food

    def reset(self, seed: int) -> np.ndarray:
        self._base_reset(seed)
        food_rng = Rng(seed + 7_777_777)  # offset keeps food and agent draws apart
        for x, y in self._scatter(food_rng, self.n_food):
            self.food_hits[y, x] = self.FOOD_HITS
        return self._observe()

    def step(self, actions):
        actions = self._validate_actions(actions)
        self._resolve_moves(actions)

        reward = self.STEP_REWARD
        for attacker, x, y in self._attack_targets(actions):
            reward += self.ATTACK_PENALTY
            if x < 0:
                continue
            if self.food_hits[y, x] > 0:
                self.food_hits[y, x] -= 1
                reward += self.ATTACK_FOOD_REWARD
            else:
                target = self._occupancy[y, x]
                if target >= 0 and target != attacker:
                    self.health[target] = 0.0  # one attack kills
        died = self._apply_deaths()
        reward += self.DEAD_PENALTY * len(died)

        self.last_action[self.alive] = actions[self.alive]
        self.steps += 1
        rewards = self._team_rewards_vector(np.array([reward]))
        done = (self.steps >= self.episode_limit
                or not (self.food_hits > 0).any()
                or not self.alive.any())
        return self._observe(), rewards, done, self.alive.copy()
