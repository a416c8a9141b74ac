"""Desk-scale multi-agent environments with a uniform interface."""

from .bandit import TwoArmedBandit
from .base import (EnvError, InputError, RegistrationError, env_names,
                   make_env, register_env, winner_from_alive)
from .battle import BattleLiteEnv
from .buttons import ButtonsEnv
from .gather import GatherLiteEnv
from .grid import GridWorld

__all__ = [
    "EnvError",
    "InputError",
    "RegistrationError",
    "register_env",
    "make_env",
    "env_names",
    "winner_from_alive",
    "GridWorld",
    "ButtonsEnv",
    "GatherLiteEnv",
    "BattleLiteEnv",
    "TwoArmedBandit",
]

register_env("buttons_4", ButtonsEnv)
register_env("gather_lite_24", GatherLiteEnv)
register_env("battle_lite_8v8", BattleLiteEnv)
register_env("bandit_2", TwoArmedBandit)
