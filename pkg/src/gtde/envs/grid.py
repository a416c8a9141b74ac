"""Shared gridworld machinery: movement, attacks, local-window observations.

A step resolves in a fixed order: movement (processed in agent-index
order against a live occupancy map, so the lower index wins a contested
cell), then all attacks simultaneously against post-movement positions,
then deaths, then rewards. Food cells block movement and are consumed by
attacks.

Observations are a flat vector: a (2r+1)^2 window in four channels
(allies, enemies, food, walls/out-of-bounds) centered on the agent,
followed by own features (position normalized to [0, 1], health fraction,
last-action one-hot). Dead agents observe the zero vector.
"""

from __future__ import annotations

import numpy as np

from ..rng import Rng
from .base import InputError

__all__ = ["GridWorld", "MOVES", "ATTACK_DIRS", "N_MOVE_ACTIONS"]

# stay, north, south, west, east as (dx, dy); y grows southward
MOVES = ((0, 0), (0, -1), (0, 1), (-1, 0), (1, 0))
ATTACK_DIRS = ((0, -1), (0, 1), (-1, 0), (1, 0))
N_MOVE_ACTIONS = len(MOVES)


class GridWorld:
    """Base class holding state and mechanics; subclasses define rewards."""

    def __init__(self, width: int, height: int, n_agents: int, teams,
                 n_actions: int, episode_limit: int, obs_radius: int = 3,
                 max_health: float = 1.0):
        self.width = width
        self.height = height
        self.n_agents = n_agents
        self.teams = tuple(tuple(m) for m in teams)
        self.n_actions = n_actions
        self.episode_limit = episode_limit
        self.obs_radius = obs_radius
        self.max_health = max_health
        window = 2 * obs_radius + 1
        self.obs_dim = 4 * window * window + 2 + 1 + n_actions

        self.positions = np.zeros((n_agents, 2), dtype=np.int64)
        self.health = np.zeros(n_agents)
        self.alive = np.zeros(n_agents, dtype=bool)
        self.last_action = np.zeros(n_agents, dtype=np.int64)
        self.food_hits = np.zeros((height, width), dtype=np.int64)
        self.steps = 0
        self._team_of = np.zeros(n_agents, dtype=np.int64)
        for t, members in enumerate(self.teams):
            for m in members:
                self._team_of[m] = t

    # -- placement -----------------------------------------------------

    def _scatter(self, rng: Rng, count: int) -> list[tuple[int, int]]:
        """Distinct free cells drawn uniformly without replacement."""
        free = [(x, y) for y in range(self.height) for x in range(self.width)
                if self._occupancy[y, x] < 0 and self.food_hits[y, x] == 0]
        order = rng.integers(0, 2**63 - 1, size=len(free))
        chosen = [free[i] for i in np.argsort(order, kind="stable")[:count]]
        if len(chosen) < count:
            raise InputError("grid too small for requested placement")
        return chosen

    def _base_reset(self, seed: int) -> None:
        rng = Rng(seed)
        self.steps = 0
        self.health[:] = self.max_health
        self.alive[:] = True
        self.last_action[:] = 0
        self.food_hits[:] = 0
        self._occupancy = np.full((self.height, self.width), -1, dtype=np.int64)
        self._place(rng)
        for i in range(self.n_agents):
            x, y = self.positions[i]
            self._occupancy[y, x] = i

    def _place(self, rng: Rng) -> None:
        """Default placement: scatter every agent uniformly."""
        for i, (x, y) in enumerate(self._scatter(rng, self.n_agents)):
            self.positions[i] = (x, y)

    # -- dynamics ------------------------------------------------------

    def _validate_actions(self, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        if actions.shape != (self.n_agents,):
            raise InputError(
                f"expected {self.n_agents} actions, got shape {actions.shape}")
        acting = actions[self.alive]
        if acting.size and (acting.min() < 0 or acting.max() >= self.n_actions):
            raise InputError(
                f"action id out of range [0, {self.n_actions}): "
                f"{int(acting.min())}..{int(acting.max())}")
        return actions

    def _resolve_moves(self, actions: np.ndarray) -> None:
        for i in range(self.n_agents):
            if not self.alive[i] or actions[i] >= N_MOVE_ACTIONS:
                continue
            dx, dy = MOVES[actions[i]]
            if dx == 0 and dy == 0:
                continue
            x, y = self.positions[i]
            nx, ny = x + dx, y + dy
            if not (0 <= nx < self.width and 0 <= ny < self.height):
                continue
            if self._occupancy[ny, nx] >= 0 or self.food_hits[ny, nx] > 0:
                continue
            self._occupancy[y, x] = -1
            self._occupancy[ny, nx] = i
            self.positions[i] = (nx, ny)

    def _attack_targets(self, actions: np.ndarray):
        """(attacker, target_cell) pairs for this step's attack actions."""
        pairs = []
        for i in range(self.n_agents):
            if not self.alive[i] or actions[i] < N_MOVE_ACTIONS:
                continue
            dx, dy = ATTACK_DIRS[actions[i] - N_MOVE_ACTIONS]
            x, y = self.positions[i]
            nx, ny = x + dx, y + dy
            if 0 <= nx < self.width and 0 <= ny < self.height:
                pairs.append((i, nx, ny))
            else:
                pairs.append((i, -1, -1))  # swing at the wall: penalty still applies
        return pairs

    def _apply_deaths(self) -> np.ndarray:
        """Kill agents at health <= 0; returns the indices that died now."""
        dying = np.flatnonzero(self.alive & (self.health <= 0.0))
        for i in dying:
            x, y = self.positions[i]
            self._occupancy[y, x] = -1
            self.alive[i] = False
        return dying

    # -- observations --------------------------------------------------

    def _observe(self) -> np.ndarray:
        r = self.obs_radius
        window = 2 * r + 1
        ally_grid = np.zeros((len(self.teams), self.height, self.width))
        for i in range(self.n_agents):
            if self.alive[i]:
                x, y = self.positions[i]
                ally_grid[self._team_of[i], y, x] = 1.0
        food_grid = (self.food_hits > 0).astype(np.float64)

        obs = np.zeros((self.n_agents, self.obs_dim))
        for i in range(self.n_agents):
            if not self.alive[i]:
                continue
            x, y = self.positions[i]
            allies = np.zeros((window, window))
            enemies = np.zeros((window, window))
            food = np.zeros((window, window))
            walls = np.ones((window, window))
            x0, x1 = max(0, x - r), min(self.width, x + r + 1)
            y0, y1 = max(0, y - r), min(self.height, y + r + 1)
            wy0, wx0 = y0 - (y - r), x0 - (x - r)
            wy1, wx1 = wy0 + (y1 - y0), wx0 + (x1 - x0)
            own_team = self._team_of[i]
            allies[wy0:wy1, wx0:wx1] = ally_grid[own_team, y0:y1, x0:x1]
            for t in range(len(self.teams)):
                if t != own_team:
                    enemies[wy0:wy1, wx0:wx1] += ally_grid[t, y0:y1, x0:x1]
            food[wy0:wy1, wx0:wx1] = food_grid[y0:y1, x0:x1]
            walls[wy0:wy1, wx0:wx1] = 0.0

            own = np.zeros(2 + 1 + self.n_actions)
            own[0] = x / (self.width - 1) if self.width > 1 else 0.0
            own[1] = y / (self.height - 1) if self.height > 1 else 0.0
            own[2] = self.health[i] / self.max_health
            own[3 + self.last_action[i]] = 1.0
            obs[i] = np.concatenate(
                [allies.ravel(), enemies.ravel(), food.ravel(), walls.ravel(), own])
        return obs

    def _team_rewards_vector(self, per_team: np.ndarray) -> np.ndarray:
        """Broadcast per-team scalars to one identical reward per member."""
        return per_team[self._team_of].astype(np.float64)
