"""Analytic task families, task sampling, and episode rollout."""

from .families import (
    ACTION_DIM,
    DEFAULT_HORIZONS,
    FAMILIES,
    GOAL_RADIUS,
    MASS_GOAL,
    MASS_RANGE,
    OOD_MASS_RANGE,
    STEP_SCALE,
    VEL_LIMIT,
    EnvState,
    TaskSpec,
    action_dim,
    env_reset,
    env_step,
    load_tasks,
    obs_dim,
    observe,
    sample_tasks,
    save_tasks,
)
from .rollout import Policy, Transition, episode_return, rollout

__all__ = [
    "ACTION_DIM",
    "DEFAULT_HORIZONS",
    "FAMILIES",
    "GOAL_RADIUS",
    "MASS_GOAL",
    "MASS_RANGE",
    "OOD_MASS_RANGE",
    "STEP_SCALE",
    "VEL_LIMIT",
    "EnvState",
    "TaskSpec",
    "action_dim",
    "env_reset",
    "env_step",
    "load_tasks",
    "obs_dim",
    "observe",
    "sample_tasks",
    "save_tasks",
    "Policy",
    "Transition",
    "episode_return",
    "rollout",
]
