"""Buttons: a coordination diagnostic.

Two buttons sit at opposite corners of the grid. If, after movement, both
button cells are occupied, the team earns +1 that step; any other step
costs -0.01. Agents only move (5 actions), never die, and the episode
runs to the step cap. Buttons render in the food channel.
"""

from __future__ import annotations

import numpy as np

from .grid import N_MOVE_ACTIONS, GridWorld

__all__ = ["ButtonsEnv"]


class ButtonsEnv(GridWorld):

    PRESS_REWARD = 1.0
    STEP_PENALTY = -0.01

    def __init__(self, n_agents: int = 4, width: int = 9, height: int = 9,
                 episode_limit: int = 400, obs_radius: int = 3):
        super().__init__(width=width, height=height, n_agents=n_agents,
                         teams=(tuple(range(n_agents)),),
                         n_actions=N_MOVE_ACTIONS,
                         episode_limit=episode_limit, obs_radius=obs_radius)
        self.buttons = ((0, 0), (width - 1, height - 1))

    def reset(self, seed: int) -> np.ndarray:
        self._base_reset(seed)
        return self._observe()

    def _observe(self) -> np.ndarray:
        # Buttons render as (indestructible, walkable) food for the window.
        grid_backup = self.food_hits.copy()
        for x, y in self.buttons:
            self.food_hits[y, x] = 1
        obs = super()._observe()
        self.food_hits = grid_backup
        return obs

    def step(self, actions):
        actions = self._validate_actions(actions)
        self._resolve_moves(actions)
        self.last_action[self.alive] = actions[self.alive]
        self.steps += 1

        occupied = [self._occupancy[y, x] >= 0 for x, y in self.buttons]
        pressed = all(occupied)
        reward = self.PRESS_REWARD if pressed else self.STEP_PENALTY
        rewards = self._team_rewards_vector(np.array([reward]))
        done = self.steps >= self.episode_limit
        return self._observe(), rewards, done, self.alive.copy()
