"""Battle-lite: two equal teams fight until one is eliminated.

Each agent moves or attacks an adjacent cell. Attacks deal one damage to
enemy agents only (attacking teammates or empty cells still costs the
attack penalty). Teams pay a per-step cost and a penalty per member lost,
and earn the attack-opponent reward per landed hit. The episode ends when
a team is wiped out or at the step cap; cap expiry with both teams alive
counts as a draw in win-rate accounting.
"""

from __future__ import annotations

import numpy as np

from .grid import ATTACK_DIRS, N_MOVE_ACTIONS, GridWorld

__all__ = ["BattleLiteEnv"]


class BattleLiteEnv(GridWorld):

    STEP_REWARD = -0.005
    ATTACK_PENALTY = -0.1
    ATTACK_OPPONENT_REWARD = 0.2
    DEAD_PENALTY = -0.1

    def __init__(self, team_size: int = 8, width: int = 15, height: int = 15,
                 episode_limit: int = 400, obs_radius: int = 3,
                 max_health: float = 3.0):
        n = 2 * team_size
        super().__init__(width=width, height=height, n_agents=n,
                         teams=(tuple(range(team_size)), tuple(range(team_size, n))),
                         n_actions=N_MOVE_ACTIONS + len(ATTACK_DIRS),
                         episode_limit=episode_limit, obs_radius=obs_radius,
                         max_health=max_health)
        self.team_size = team_size

    def reset(self, seed: int) -> np.ndarray:
        self._base_reset(seed)
        return self._observe()

    def step(self, actions):
        actions = self._validate_actions(actions)
        self._resolve_moves(actions)

        per_team = np.full(2, self.STEP_REWARD)
        damage = np.zeros(self.n_agents)
        for attacker, x, y in self._attack_targets(actions):
            team = self._team_of[attacker]
            per_team[team] += self.ATTACK_PENALTY
            if x < 0:
                continue
            target = self._occupancy[y, x]
            if target >= 0 and self._team_of[target] != team:
                damage[target] += 1.0
                per_team[team] += self.ATTACK_OPPONENT_REWARD
        self.health -= damage
        died = self._apply_deaths()
        for i in died:
            per_team[self._team_of[i]] += self.DEAD_PENALTY

        self.last_action[self.alive] = actions[self.alive]
        self.steps += 1
        rewards = self._team_rewards_vector(per_team)
        team_alive = [self.alive[list(members)].any() for members in self.teams]
        done = self.steps >= self.episode_limit or not all(team_alive)
        return self._observe(), rewards, done, self.alive.copy()
