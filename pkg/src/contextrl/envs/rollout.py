"""Episode collection: transitions and the rollout loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .families import TaskSpec, env_reset, env_step, observe


@dataclass
class Transition:
    """One environment step as stored in replay.

    `env_reward` is what the task paid out; `aux_reward` is the intrinsic
    bonus attached at collection time (zero unless an exploration policy
    wrote it). `done` marks an absorbing state, not a horizon cutoff:
    value targets must bootstrap through time limits, so episodes that end
    purely because the step budget ran out store done=False.
    """

    obs: np.ndarray
    action: np.ndarray
    env_reward: float
    next_obs: np.ndarray
    done: bool
    task_id: str
    aux_reward: float = 0.0


Policy = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def rollout(
    task: TaskSpec,
    policy: Policy,
    rng: np.random.Generator,
    max_steps: int | None = None,
    on_step: Callable[[Transition], None] | None = None,
) -> list[Transition]:
    """Run one episode; `policy(obs, rng) -> action` supplies behavior.

    Stops at the task horizon or `max_steps`, whichever comes first. The
    optional `on_step` hook sees each transition as it happens, which lets
    callers refresh a task belief between steps.
    """
    state = env_reset(task)
    steps = task.horizon if max_steps is None else min(max_steps, task.horizon)
    out: list[Transition] = []
    for _ in range(steps):
        obs = observe(task, state)
        action = np.asarray(policy(obs, rng), dtype=np.float64)
        state, reward = env_step(task, state, action)
        tr = Transition(
            obs=obs,
            action=np.clip(action, -1.0, 1.0),
            env_reward=reward,
            next_obs=observe(task, state),
            # Families terminate only by horizon; that is a time limit,
            # not an absorbing state, so replay never sees done=True here.
            done=state.done and state.step < task.horizon,
            task_id=task.task_id,
        )
        out.append(tr)
        if on_step is not None:
            on_step(tr)
        if state.done:
            break
    return out


def episode_return(transitions: list[Transition]) -> float:
    return float(sum(t.env_reward for t in transitions))
