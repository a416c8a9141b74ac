"""Uniform multi-agent environment interface and the name registry.

An environment exposes ``n_agents``, ``obs_dim``, ``n_actions``,
``teams`` (tuple of agent-index tuples), ``episode_limit``, plus:

    reset(seed) -> (n_agents, obs_dim) observations
    step(actions) -> (observations, rewards, done, alive)

``rewards`` is one float per agent, identical within a team at every
step. ``alive`` is the post-step boolean mask. Dead agents never act and
observe zero vectors from the step they die.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "EnvError",
    "RegistrationError",
    "InputError",
    "register_env",
    "make_env",
    "env_names",
    "winner_from_alive",
]


class EnvError(ValueError):
    """Environment misuse or unknown environment name."""


class RegistrationError(EnvError):
    """Duplicate registry name."""


class InputError(EnvError):
    """Out-of-range action id or malformed joint action."""


_REGISTRY: dict[str, Callable] = {}


def register_env(name: str, factory: Callable) -> None:
    if name in _REGISTRY:
        raise RegistrationError(f"environment {name!r} already registered")
    _REGISTRY[name] = factory


def make_env(name: str, **overrides):
    if name not in _REGISTRY:
        raise EnvError(
            f"unknown environment {name!r}; registered: {sorted(_REGISTRY)}")
    try:
        return _REGISTRY[name](**overrides)
    except TypeError as err:
        raise EnvError(f"bad override for environment {name!r}: {err}") from err


def env_names() -> list[str]:
    return sorted(_REGISTRY)


def winner_from_alive(teams, alive) -> float | None:
    """0-based index of the sole surviving team, or None for a draw."""
    alive = np.asarray(alive, dtype=bool)
    survivors = [t for t, members in enumerate(teams) if alive[list(members)].any()]
    if len(survivors) == 1 and len(teams) > 1:
        return float(survivors[0])
    return None
