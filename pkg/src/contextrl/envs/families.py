"""Analytic point-mass task families.

All four families share a 2D action space in [-1, 1]^2 and differ in what
the hidden task parameter controls: the goal position (dense or sparse
reward, or two goals in sequence) or the particle's mass. Dynamics are
closed-form, so unit tests can check transitions against hand-computed
values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, EpisodeDoneError

STEP_SCALE = 0.1
GOAL_RADIUS = 0.2
VEL_LIMIT = 5.0
MASS_RANGE = (0.2, 1.5)
OOD_MASS_RANGE = (1.5, 1.8)
GOAL_RANGE = (0.0, 1.0)
OOD_GOAL_RANGE = (1.0, 1.3)
MASS_GOAL = np.array([1.0, 0.0])

FAMILIES = (
    "point_goal_dense",
    "point_goal_sparse",
    "hard_point_robot",
    "point_mass_dynamics",
)

DEFAULT_HORIZONS = {
    "point_goal_dense": 50,
    "point_goal_sparse": 50,
    "hard_point_robot": 40,
    "point_mass_dynamics": 50,
}

ACTION_DIM = 2


@dataclass(frozen=True)
class TaskSpec:
    """One task: a family name plus its hidden parameter vector."""

    family: str
    params: np.ndarray
    horizon: int
    task_id: str

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown task family {self.family!r}")
        object.__setattr__(self, "params", np.asarray(self.params, dtype=np.float64))
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")


@dataclass(frozen=True)
class EnvState:
    pos: np.ndarray
    vel: np.ndarray
    step: int
    goals_reached: int
    done: bool


def obs_dim(family: str) -> int:
    return {"point_goal_dense": 2, "point_goal_sparse": 2,
            "hard_point_robot": 3, "point_mass_dynamics": 4}[family]


def action_dim(family: str) -> int:
    return ACTION_DIM


def env_reset(task: TaskSpec) -> EnvState:
    """Every family starts at the origin at rest."""
    return EnvState(
        pos=np.zeros(2), vel=np.zeros(2), step=0, goals_reached=0, done=False
    )


def observe(task: TaskSpec, state: EnvState) -> np.ndarray:
    """Observation vector; never leaks the task parameters."""
    if task.family == "hard_point_robot":
        return np.concatenate([state.pos, [float(state.goals_reached)]])
    if task.family == "point_mass_dynamics":
        return np.concatenate([state.pos, state.vel])
    return state.pos.copy()


def _sparse_reward(dist: float) -> float:
    if dist < GOAL_RADIUS:
        return 1.0 - dist / GOAL_RADIUS
    return 0.0


def env_step(task: TaskSpec, state: EnvState, action: np.ndarray) -> tuple[EnvState, float]:
    """Advance one timestep; raises once the horizon has been consumed."""
    if state.done:
        raise EpisodeDoneError(
            f"episode for {task.task_id} already finished at step {state.step}"
        )
    action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if action.shape != (ACTION_DIM,):
        raise ConfigurationError(f"action shape {action.shape} != ({ACTION_DIM},)")

    goals_reached = state.goals_reached
    vel = state.vel
    if task.family == "point_mass_dynamics":
        mass = float(task.params[0])
        vel = np.clip(state.vel + STEP_SCALE * action / mass, -VEL_LIMIT, VEL_LIMIT)
        pos = state.pos + STEP_SCALE * vel
        reward = -float(np.linalg.norm(pos - MASS_GOAL))
    else:
        pos = state.pos + STEP_SCALE * action
        if task.family == "point_goal_dense":
            reward = -float(np.linalg.norm(pos - task.params))
        elif task.family == "point_goal_sparse":
            reward = _sparse_reward(float(np.linalg.norm(pos - task.params)))
        else:  # hard_point_robot: reward against whichever goal is active
            goals = task.params.reshape(2, 2)
            active = goals[min(goals_reached, 1)]
            dist = float(np.linalg.norm(pos - active))
            reward = _sparse_reward(dist)
            if dist < GOAL_RADIUS and goals_reached < 2:
                goals_reached += 1

    next_step = state.step + 1
    new_state = EnvState(
        pos=pos,
        vel=vel,
        step=next_step,
        goals_reached=goals_reached,
        done=next_step >= task.horizon,
    )
    return new_state, reward


# -- task sampling -------------------------------------------------------


def _sample_params(family: str, rng: np.random.Generator, ood: bool) -> np.ndarray:
    if family == "point_mass_dynamics":
        lo, hi = OOD_MASS_RANGE if ood else MASS_RANGE
        return rng.uniform(lo, hi, size=1)
    n_goals = 2 if family == "hard_point_robot" else 1
    # Test-beyond-train ranges for goals mirror the mass convention: the
    # out-of-distribution box starts where the training box ends.
    lo, hi = OOD_GOAL_RANGE if ood else GOAL_RANGE
    return rng.uniform(lo, hi, size=2 * n_goals)


_ROLE_STREAM = {"train": 0, "test": 1}


def sample_tasks(
    family: str,
    n: int,
    seed: int,
    role: str = "train",
    ood: bool = False,
    horizon: int | None = None,
) -> list[TaskSpec]:
    """Draw `n` tasks deterministically; train and test streams never overlap.

    The train and test splits come from disjoint children of one seed
    sequence, so any (seed, role) pair always yields the same tasks and the
    two roles share no randomness. Out-of-distribution sampling widens the
    parameter range and uses a third stream.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown task family {family!r}")
    if role not in _ROLE_STREAM:
        raise ConfigurationError(f"role must be train or test, got {role!r}")
    if n < 1:
        raise ConfigurationError(f"need at least one task, got n={n}")
    stream = _ROLE_STREAM[role] + (2 if ood else 0)
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(4)[stream])
    if horizon is None:
        horizon = DEFAULT_HORIZONS[family]
    tag = f"{role}-ood" if ood else role
    return [
        TaskSpec(
            family=family,
            params=_sample_params(family, rng, ood),
            horizon=horizon,
            task_id=f"{family}-{tag}-{i:03d}",
        )
        for i in range(n)
    ]


# -- serialization -------------------------------------------------------


def save_tasks(tasks: list[TaskSpec], path: str) -> None:
    """One line per task: `task_id family p0,p1,... horizon`."""
    with open(path, "w") as fh:
        for t in tasks:
            values = ",".join(repr(float(p)) for p in t.params)
            fh.write(f"{t.task_id} {t.family} {values} {t.horizon}\n")


def load_tasks(path: str) -> list[TaskSpec]:
    tasks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ConfigurationError(f"{path}:{lineno}: expected 4 fields")
            task_id, family, values, horizon = fields
            params = np.array([float(v) for v in values.split(",")])
            tasks.append(
                TaskSpec(family=family, params=params, horizon=int(horizon), task_id=task_id)
            )
    return tasks
