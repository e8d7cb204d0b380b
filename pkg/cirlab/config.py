"""
Training configuration for cirlab

Config files are flat TOML documents (one `key = value` per line). Values given
on the command line override values read from a file.
"""

import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import toml

from .envs import ENVIRONMENTS
from .networks import ACTIVATIONS, INIT_SCHEMES, INPUT_NORMS, SKIP_MODES


class ConfigError(ValueError):
    """Raised when a configuration has one or more invalid fields."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class TrainConfig:
    """Every training hyperparameter plus the architecture ablation switches."""

    env: str | None = None
    steps: int = 50_000
    seed: int = 0
    batch_size: int = 256
    learning_rate: float = 3e-4
    tau: float = 5e-3
    buffer_size: int = 1_000_000
    warmup_steps: int = 5_000
    smr: int = 2
    convex_lambda: float = 0.3
    rnorm_c: float = 0.1
    gamma: float = 0.99
    critic_hidden: int = 512
    critic_depth: int = 2
    actor_hidden: tuple[int, ...] = (512, 512)
    target_entropy: float | None = None
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    init_log_alpha: float = 0.0
    activation: str = "tanh"
    layernorm: bool = True
    input_layernorm: bool = True
    input_norm: str = "avg"
    all_avg_rnorm: bool = False
    skip: str = "unet"
    init: str = "uniform"
    entropy_in_target: bool = True
    resample_target_action: bool = True
    eval_interval: int = 1_000
    eval_episodes: int = 5

    def __post_init__(self):
        """Normalize list-valued fields read from TOML."""
        if isinstance(self.actor_hidden, list):
            self.actor_hidden = tuple(self.actor_hidden)

    def validate(self) -> list[str]:
        """Return field-level problems; empty when the config is usable."""
        errors: list[str] = []
        if not self.env:
            errors.append("env: required (one of " + ", ".join(sorted(ENVIRONMENTS)) + ")")
        elif self.env not in ENVIRONMENTS:
            errors.append(f"env: unknown environment {self.env!r}")
        for name in ("batch_size", "buffer_size", "smr", "critic_hidden", "critic_depth",
                     "eval_interval", "eval_episodes"):
            if getattr(self, name) < 1:
                errors.append(f"{name}: must be >= 1, got {getattr(self, name)}")
        if self.critic_hidden == 1:
            errors.append("critic_hidden: layer normalisation needs a width of at least 2")
        for name in ("steps", "warmup_steps", "seed"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be >= 0, got {getattr(self, name)}")
        # every step after warmup runs exactly `smr` update iterations on a full batch
        if 0 <= self.warmup_steps < self.batch_size:
            errors.append(
                f"warmup_steps: must be >= batch_size ({self.batch_size}) so every update "
                f"step has a full batch, got {self.warmup_steps}"
            )
        if 1 <= self.buffer_size < self.batch_size:
            errors.append(
                f"buffer_size: must be >= batch_size ({self.batch_size}), got {self.buffer_size}"
            )
        if not 0.0 <= self.convex_lambda <= 1.0:
            errors.append(f"convex_lambda: must lie in [0, 1], got {self.convex_lambda}")
        if not 0.0 <= self.gamma < 1.0:
            errors.append(f"gamma: must lie in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            errors.append(f"tau: must lie in (0, 1], got {self.tau}")
        if self.learning_rate <= 0:
            errors.append(f"learning_rate: must be positive, got {self.learning_rate}")
        if self.rnorm_c <= 0:
            errors.append(f"rnorm_c: must be positive, got {self.rnorm_c}")
        if self.log_std_min >= self.log_std_max:
            errors.append("log_std_min: must be below log_std_max")
        if not self.actor_hidden or any(w < 1 for w in self.actor_hidden):
            errors.append(f"actor_hidden: needs positive widths, got {list(self.actor_hidden)}")
        choices = {
            "activation": ACTIVATIONS,
            "input_norm": INPUT_NORMS,
            "skip": SKIP_MODES,
            "init": INIT_SCHEMES,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                errors.append(f"{name}: must be one of {', '.join(allowed)}, got {getattr(self, name)!r}")
        return errors

    def check(self) -> "TrainConfig":
        errors = self.validate()
        if errors:
            raise ConfigError(errors)
        return self

    def resolved_target_entropy(self, act_dim: int) -> float:
        return -float(act_dim) if self.target_entropy is None else self.target_entropy

    def to_dict(self) -> dict[str, Any]:
        """Convert to a flat dictionary for TOML/JSON storage."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["actor_hidden"] = list(self.actor_hidden)
        return {k: v for k, v in data.items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        """Create a config from a flat dictionary, checking keys and types."""
        errors: list[str] = []
        known = {f.name: f for f in fields(cls)}
        values: dict[str, Any] = {}
        for key, raw in data.items():
            if key not in known:
                errors.append(f"{key}: unknown setting")
                continue
            try:
                values[key] = _coerce(key, raw, known[key].default)
            except (TypeError, ValueError) as e:
                errors.append(f"{key}: {e}")
        if errors:
            raise ConfigError(errors)
        return cls(**values)

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return TrainConfig.from_dict(merged)

    def content_hash(self) -> str:
        """Git-style blob hash of the canonical JSON form."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def _coerce(key: str, raw: Any, default: Any) -> Any:
    if key == "actor_hidden":
        if not isinstance(raw, list | tuple) or not all(_is_int(v) for v in raw):
            raise TypeError(f"expected a list of integers, got {raw!r}")
        return tuple(int(v) for v in raw)
    if key in ("env", "target_entropy") and raw is None:
        return None
    if key == "env":
        if not isinstance(raw, str):
            raise TypeError(f"expected a string, got {raw!r}")
        return raw
    if key == "target_entropy":
        return _as_float(raw)
    if isinstance(default, bool):
        if not isinstance(raw, bool):
            raise TypeError(f"expected true or false, got {raw!r}")
        return raw
    if isinstance(default, int):
        if not _is_int(raw):
            raise TypeError(f"expected an integer, got {raw!r}")
        return int(raw)
    if isinstance(default, float):
        return _as_float(raw)
    if not isinstance(raw, str):
        raise TypeError(f"expected a string, got {raw!r}")
    return raw


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _as_float(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float):
        raise TypeError(f"expected a number, got {value!r}")
    return float(value)


def load_config(path: Path, **overrides: Any) -> TrainConfig:
    """Read a flat TOML config and apply overrides; raises ConfigError."""
    try:
        data = toml.load(path)
    except FileNotFoundError:
        raise ConfigError([f"config: file not found: {path}"])
    except (toml.TomlDecodeError, OSError) as e:
        raise ConfigError([f"config: cannot parse {path}: {e}"])
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError([f"{k}: tables are not supported in flat config files" for k in nested])
    return TrainConfig.from_dict(data).with_overrides(**overrides)


def save_config(config: TrainConfig, path: Path) -> None:
    """Write a config as flat TOML."""
    with path.open("w", encoding="utf-8") as f:
        toml.dump(config.to_dict(), f)

