"""Per-task replay with three sampling views.

Each task owns two ring buffers. The exploration ring holds data gathered
by the exploration policy and serves two views: RL batches whose reward
channel is shaped (environment reward plus the scaled intrinsic bonus) and
encoder batches restricted to a recency window with unshaped rewards. The
execution ring feeds the execution policy with environment rewards only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import Transition, TaskSpec
from .errors import ConfigurationError, EmptyBufferError, TaskMismatchError

DESTINATIONS = ("exploration", "execution", "both")
VIEWS = ("exploration", "execution", "encoder")


@dataclass
class TransitionBatch:
    """Column-stacked transitions; `reward` is already view-appropriate."""

    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    task_id: str

    def __len__(self) -> int:
        return self.obs.shape[0]


def batch_from_transitions(transitions: list[Transition]) -> TransitionBatch:
    """Stack raw transitions into a batch with environment rewards."""
    if not transitions:
        raise EmptyBufferError("cannot build a batch from zero transitions")
    return TransitionBatch(
        obs=np.stack([t.obs for t in transitions]),
        action=np.stack([t.action for t in transitions]),
        reward=np.array([t.env_reward for t in transitions]),
        next_obs=np.stack([t.next_obs for t in transitions]),
        done=np.array([float(t.done) for t in transitions]),
        task_id=transitions[0].task_id,
    )


class RingBuffer:
    """Fixed-capacity transition store; overwrites oldest entries first."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.count = 0
        self._next = 0
        self._arrays: dict[str, np.ndarray] | None = None

    def _allocate(self, tr: Transition) -> None:
        self._arrays = {
            "obs": np.zeros((self.capacity, tr.obs.shape[0])),
            "action": np.zeros((self.capacity, tr.action.shape[0])),
            "env_reward": np.zeros(self.capacity),
            "aux_reward": np.zeros(self.capacity),
            "next_obs": np.zeros((self.capacity, tr.next_obs.shape[0])),
            "done": np.zeros(self.capacity),
        }

    def add(self, tr: Transition) -> None:
        if self._arrays is None:
            self._allocate(tr)
        a = self._arrays
        i = self._next
        a["obs"][i] = tr.obs
        a["action"][i] = tr.action
        a["env_reward"][i] = tr.env_reward
        a["aux_reward"][i] = tr.aux_reward
        a["next_obs"][i] = tr.next_obs
        a["done"][i] = float(tr.done)
        self._next = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def recent_indices(self, window: int) -> np.ndarray:
        """Storage indices of the newest min(count, window) entries."""
        k = min(self.count, window)
        return (self._next - 1 - np.arange(k)) % self.capacity

    def gather(self, idx: np.ndarray) -> dict[str, np.ndarray]:
        return {name: arr[idx] for name, arr in self._arrays.items()}


class TaskBuffers:
    """All replay data for one task."""

    def __init__(
        self,
        task: TaskSpec,
        alpha: float,
        capacity: int = 20_000,
        encoder_window: int | None = None,
    ):
        self.task = task
        self.alpha = float(alpha)
        self.exploration = RingBuffer(capacity)
        self.execution = RingBuffer(capacity)
        # The encoder sees only fresh exploration data, one window's worth.
        self.encoder_window = 10 * task.horizon if encoder_window is None else encoder_window
        if self.encoder_window < 1:
            raise ConfigurationError("encoder_window must be positive")

    def add(self, tr: Transition, destination: str) -> None:
        if tr.task_id != self.task.task_id:
            raise TaskMismatchError(
                f"transition for {tr.task_id!r} offered to buffers of {self.task.task_id!r}"
            )
        if destination not in DESTINATIONS:
            raise ConfigurationError(f"unknown destination {destination!r}")
        if destination in ("exploration", "both"):
            self.exploration.add(tr)
        if destination in ("execution", "both"):
            self.execution.add(tr)

    def sizes(self) -> dict[str, int]:
        return {
            "exploration": self.exploration.count,
            "execution": self.execution.count,
            "encoder": min(self.exploration.count, self.encoder_window),
        }

    def _batch_from(self, ring: RingBuffer, idx: np.ndarray, shaped: bool) -> TransitionBatch:
        cols = ring.gather(idx)
        reward = cols["env_reward"]
        if shaped:
            reward = reward + self.alpha * cols["aux_reward"]
        return TransitionBatch(
            obs=cols["obs"],
            action=cols["action"],
            reward=reward,
            next_obs=cols["next_obs"],
            done=cols["done"],
            task_id=self.task.task_id,
        )

    def sample_rl_batch(
        self, which: str, batch_size: int, rng: np.random.Generator
    ) -> TransitionBatch:
        """Uniform sample with replacement from the requested view."""
        if which not in VIEWS:
            raise ConfigurationError(f"unknown view {which!r}")
        if which == "execution":
            ring = self.execution
            if ring.count == 0:
                raise EmptyBufferError(f"execution buffer of {self.task.task_id} is empty")
            idx = rng.integers(0, ring.count, size=batch_size)
            return self._batch_from(ring, idx, shaped=False)
        ring = self.exploration
        if ring.count == 0:
            raise EmptyBufferError(f"exploration buffer of {self.task.task_id} is empty")
        if which == "exploration":
            idx = rng.integers(0, ring.count, size=batch_size)
            return self._batch_from(ring, idx, shaped=True)
        pool = ring.recent_indices(self.encoder_window)
        idx = pool[rng.integers(0, pool.size, size=batch_size)]
        return self._batch_from(ring, idx, shaped=False)

    def sample_contrastive_pair(
        self, batch_size: int, rng: np.random.Generator
    ) -> tuple[TransitionBatch, TransitionBatch]:
        """Two independent encoder-view batches for query and key."""
        return (
            self.sample_rl_batch("encoder", batch_size, rng),
            self.sample_rl_batch("encoder", batch_size, rng),
        )
