"""Flat key=value run configuration with documented defaults.

A run config is a text file of ``key = value`` lines; ``#`` starts a
comment and blank lines are ignored. Unknown keys are rejected by name.
Command-line ``--set key=value`` overrides compose last-wins on top of
the file. Keys prefixed ``env.`` pass through to the environment
constructor (validated against its signature at build time).

Battle-lite presets use their scenario's table values when the user does
not set them explicitly: gamma 0.95, entropy_coef 0.08,
value_loss_coef 0.1. Every other environment keeps the base defaults
(gamma 0.99, entropy_coef 0.01, value_loss_coef 1.0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .algos import (AGGREGATIONS, ALGORITHMS, DROP_MODES, PARADIGMS,
                    ParadigmConfig)

__all__ = ["ConfigError", "RunConfig", "KEYS", "parse_config_text",
           "load_run_config", "run_config_from_flat", "dump_defaults"]


class ConfigError(ValueError):
    """Bad config key or value; carries the offending key."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class _Key:
    name: str
    kind: type
    default: object
    help: str
    choices: Optional[tuple] = None

    def parse(self, raw: str):
        try:
            if self.kind is bool:
                value = _parse_bool(raw)
            else:
                value = self.kind(raw)
        except ValueError as err:
            raise ConfigError(
                f"key {self.name!r}: cannot parse {raw!r} as {self.kind.__name__}",
                key=self.name) from err
        if self.choices is not None and value not in self.choices:
            raise ConfigError(
                f"key {self.name!r}: {value!r} not in {self.choices}", key=self.name)
        return value


_BASE = ParadigmConfig()

KEYS: dict[str, _Key] = {k.name: k for k in [
    _Key("env", str, "buttons_4", "environment registry name"),
    _Key("paradigm", str, _BASE.paradigm, "critic wiring", PARADIGMS),
    _Key("algorithm", str, _BASE.algorithm, "training algorithm", ALGORITHMS),
    _Key("aggregation", str, _BASE.aggregation, "group fusion method", AGGREGATIONS),
    _Key("gamma", float, _BASE.gamma, "discount factor (battle_lite: 0.95)"),
    _Key("gae_lambda", float, _BASE.gae_lambda, "GAE lambda"),
    _Key("clip_eps", float, _BASE.clip_eps, "PPO clip range"),
    _Key("lr", float, _BASE.lr, "learning rate"),
    _Key("ppo_epochs", int, _BASE.ppo_epochs, "update epochs per iteration (ppo)"),
    _Key("minibatches", int, _BASE.minibatches, "minibatches per epoch"),
    _Key("value_loss_coef", float, _BASE.value_loss_coef,
         "critic loss weight (battle_lite: 0.1)"),
    _Key("entropy_coef", float, _BASE.entropy_coef,
         "entropy bonus weight (battle_lite: 0.08)"),
    _Key("temperature", float, _BASE.temperature, "Gumbel-Sigmoid temperature"),
    _Key("drop_prob", float, _BASE.drop_prob, "adjacency drop probability"),
    _Key("drop_mask", str, _BASE.drop_mask,
         "drop-mask switch; auto = on for gat, off for matmul", DROP_MODES),
    _Key("history_len", int, _BASE.history_len, "observation window length"),
    _Key("hidden", int, _BASE.hidden, "encoder width"),
    _Key("heads", int, _BASE.heads, "attention heads"),
    _Key("gat_head_dim", int, _BASE.gat_head_dim, "per-head attention width"),
    _Key("gat_leaky_scores", bool, _BASE.gat_leaky_scores,
         "leaky rectifier on attention scores (affine form when off)"),
    _Key("grad_clip_norm", float, _BASE.grad_clip_norm, "global gradient norm cap"),
    _Key("seed", int, _BASE.seed, "master seed"),
    _Key("num_envs", int, _BASE.num_envs, "parallel rollout environments"),
    _Key("rollout_len", int, _BASE.rollout_len, "steps per environment per iteration"),
    _Key("iterations", int, 100, "training iterations"),
    _Key("checkpoint_every", int, 0, "checkpoint cadence in iterations (0 = final only)"),
    _Key("eval_episodes", int, 200, "episodes per evaluation"),
    _Key("out_dir", str, "runs/default", "output directory"),
]}

# Keys resolved per environment family when the user leaves them unset.
_ENV_CONDITIONAL = {
    "battle_lite": {"gamma": 0.95, "entropy_coef": 0.08, "value_loss_coef": 0.1},
}

_PARADIGM_FIELDS = tuple(ParadigmConfig.__dataclass_fields__)


@dataclass
class RunConfig:
    """Resolved run settings: paradigm config + harness fields."""

    values: dict = field(default_factory=dict)
    env_overrides: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def paradigm_config(self) -> ParadigmConfig:
        return ParadigmConfig(**{f: self.values[f] for f in _PARADIGM_FIELDS})

    def as_flat_dict(self) -> dict[str, str]:
        """String echo of every key, for checkpoints and reproducibility."""
        out = {k: str(v) for k, v in sorted(self.values.items())}
        for k, v in sorted(self.env_overrides.items()):
            out[f"env.{k}"] = str(v)
        return out


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> string map from config text; unknown keys pass through
    here and are rejected during resolution (env.* keys are validated
    against the environment constructor instead)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def _resolve(raw: dict[str, str]) -> RunConfig:
    values = {}
    env_overrides: dict[str, str] = {}
    for key, text in raw.items():
        if key.startswith("env."):
            env_overrides[key[4:]] = text
            continue
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        values[key] = KEYS[key].parse(text)
    env_name = values.get("env", KEYS["env"].default)
    conditional = next((extra for prefix, extra in _ENV_CONDITIONAL.items()
                        if str(env_name).startswith(prefix)), {})
    for key, spec in KEYS.items():
        if key not in values:
            values[key] = conditional.get(key, spec.default)
    typed_env_overrides = {k: _coerce_env_value(v) for k, v in env_overrides.items()}
    return RunConfig(values=values, env_overrides=typed_env_overrides)


def _coerce_env_value(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    try:
        return _parse_bool(text)
    except ValueError:
        return text


def run_config_from_flat(flat: dict[str, str]) -> RunConfig:
    """Resolve a raw string map (e.g. a checkpoint's config echo)."""
    return _resolve(dict(flat))


def load_run_config(path: Optional[str | Path] = None,
                    overrides: Optional[list[str]] = None) -> RunConfig:
    """Read a config file (optional) and apply ``key=value`` overrides."""
    raw: dict[str, str] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        raw.update(parse_config_text(text, source=str(path)))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()
    return _resolve(raw)


def dump_defaults(env_name: Optional[str] = None) -> str:
    """Stable text listing of every key and its (env-resolved) default."""
    raw = {} if env_name is None else {"env": env_name}
    resolved = _resolve(raw)
    lines = ["# gtde run configuration defaults"]
    if env_name is not None:
        lines.append(f"# resolved for env = {env_name}")
    for key in sorted(KEYS):
        spec = KEYS[key]
        lines.append(f"{key} = {resolved.values[key]}  # {spec.help}")
    return "\n".join(lines) + "\n"
