"""Run configuration: one flat dataclass, parsed from `key = value` files."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from ..context.training import MODES
from ..envs import FAMILIES
from ..errors import ConfigurationError

CONTEXT_UPDATES = ("step", "episode")


@dataclass
class RunConfig:
    """Everything a meta-training or meta-testing run needs."""

    env_family: str = "point_goal_dense"
    seed: int = 0
    out_dir: str = "runs/default"

    # task set sizes
    train_tasks: int = 10
    test_tasks: int = 10
    meta_batch: int = 4
    ood: bool = False

    # schedule
    iterations: int = 50
    pretrain_iters: int = 10
    grad_steps: int = 100
    eval_every: int = 0  # 0: evaluate only after the last iteration

    # encoder
    encoder_mode: str = "cl"
    latent_dim: int = 7
    deterministic_encoder: bool = False
    momentum: float = 0.99
    beta: float = 0.1
    contrastive_scale: float = 1.0
    encoder_batch_size: int = 64

    # exploration bonus
    alpha: float = 1.0
    reward_batch_size: int = 16
    regularizer: bool = True  # False: pay only the positive-alignment component

    # agents
    hidden_sizes: tuple[int, ...] = (64, 64)
    lr: float = 3e-4
    gamma: float = 0.99
    rho: float = 0.995
    batch_size: int = 128
    buffer_capacity: int = 20_000

    # meta-test protocol
    explore_episodes: int = 2
    execution_episodes: int | None = None  # None: same as explore_episodes
    context_update: str = "step"

    def validate(self) -> "RunConfig":
        if self.env_family not in FAMILIES:
            raise ConfigurationError(f"unknown env_family {self.env_family!r}")
        if self.encoder_mode.strip().lower() not in MODES:
            raise ConfigurationError(
                f"encoder_mode must be one of {MODES}, got {self.encoder_mode!r}"
            )
        if self.context_update not in CONTEXT_UPDATES:
            raise ConfigurationError(
                f"context_update must be one of {CONTEXT_UPDATES}, got {self.context_update!r}"
            )
        if self.explore_episodes < 1:
            raise ConfigurationError(
                "at least one exploration episode is required to infer the task"
            )
        if self.execution_episodes is not None and self.execution_episodes < 1:
            raise ConfigurationError("execution_episodes must be positive")
        if self.train_tasks < 1 or self.test_tasks < 1:
            raise ConfigurationError("task counts must be positive")
        if self.meta_batch < 1:
            raise ConfigurationError("meta_batch must be positive")
        if self.meta_batch > self.train_tasks:
            raise ConfigurationError(
                f"meta_batch {self.meta_batch} exceeds train_tasks {self.train_tasks}"
            )
        if "cl" in self.encoder_mode.lower() and self.meta_batch < 2:
            raise ConfigurationError(
                "contrastive training needs meta_batch >= 2 for negatives"
            )
        if self.alpha < 0 or self.beta < 0 or self.contrastive_scale < 0:
            raise ConfigurationError("alpha, beta, contrastive_scale must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.iterations < 0 or self.pretrain_iters < 0 or self.grad_steps < 0:
            raise ConfigurationError("schedule values must be nonnegative")
        if self.latent_dim < 1 or self.batch_size < 1 or self.encoder_batch_size < 1:
            raise ConfigurationError("sizes must be positive")
        if not self.hidden_sizes:
            raise ConfigurationError("hidden_sizes must not be empty")
        return self

    @property
    def test_execution_episodes(self) -> int:
        return (
            self.explore_episodes
            if self.execution_episodes is None
            else self.execution_episodes
        )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if value is None:
        return "none"
    return str(value)


def _parse_value(field: dataclasses.Field, raw: str):
    raw = raw.strip()
    name = field.name
    if name == "hidden_sizes":
        try:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ConfigurationError(f"bad hidden_sizes value {raw!r}") from None
    if name == "execution_episodes":
        if raw.lower() in ("none", ""):
            return None
        return _parse_scalar(int, name, raw)
    if field.type in ("int", int):
        return _parse_scalar(int, name, raw)
    if field.type in ("float", float):
        return _parse_scalar(float, name, raw)
    if field.type in ("bool", bool):
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigurationError(f"bad boolean for {name}: {raw!r}")
    return raw


def _parse_scalar(cast, name, raw):
    try:
        return cast(raw)
    except ValueError:
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def config_to_text(cfg: RunConfig) -> str:
    lines = [
        f"{f.name} = {_format_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(RunConfig)
    ]
    return "\n".join(lines) + "\n"


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(config_to_text(cfg))


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Apply `key = value` lines on top of `base` (or the defaults)."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigurationError(f"line {lineno}: unknown option {key!r}")
        setattr(cfg, key, _parse_value(_FIELDS[key], raw))
    return cfg


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base)


def apply_overrides(cfg: RunConfig, overrides: dict[str, str]) -> RunConfig:
    """Apply string overrides (e.g. from CLI flags) onto a config."""
    for key, raw in overrides.items():
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown option {key!r}")
        setattr(cfg, key, _parse_value(_FIELDS[key], raw))
    return cfg
