"""Information-gain intrinsic reward for the exploration policy.

The bonus for a new transition is the difference of two contrastive
losses: a discrimination loss of the updated task belief (positive key
included in the denominator) subtracted from a looser one of the previous
belief (positive excluded). Both are scored against the same candidate
set, so the difference measures how much the new transition sharpened the
task inference. The same quantity lower-bounds the conditional mutual
information between the belief and the transition; `mi_oracle` and
`bound_margins` provide the brute-force checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .context import EncoderSpec, encode, encoder_inputs
from .approx import ParamSet
from .errors import ConfigurationError
from .replay import TaskBuffers


@dataclass
class CandidateSet:
    """One positive key plus the negative keys it competes against."""

    positive: np.ndarray  # (latent_dim,)
    negatives: np.ndarray  # (n_neg, latent_dim)

    def __post_init__(self):
        if self.negatives.ndim != 2 or self.negatives.shape[0] < 1:
            raise ConfigurationError("need at least one negative key")


def _scores(w_sim: np.ndarray, query: np.ndarray, cands: CandidateSet):
    qw = query @ w_sim
    return float(qw @ cands.positive), qw @ cands.negatives.T


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(np.exp(x - m).sum())


def discrimination_loss(w_sim: np.ndarray, query: np.ndarray, cands: CandidateSet) -> float:
    """-log softmax of the positive among all candidates (positive included)."""
    s_pos, s_neg = _scores(w_sim, query, cands)
    return _logsumexp(np.append(s_neg, s_pos)) - s_pos


def exclusion_loss(w_sim: np.ndarray, query: np.ndarray, cands: CandidateSet) -> float:
    """Same ratio but with only the negatives in the denominator."""
    s_pos, s_neg = _scores(w_sim, query, cands)
    return _logsumexp(s_neg) - s_pos


def intrinsic_reward(
    w_sim: np.ndarray,
    cands: CandidateSet,
    query_now: np.ndarray,
    query_prev: np.ndarray,
) -> float:
    """Information gained about the task by the newest transition."""
    return exclusion_loss(w_sim, query_prev, cands) - discrimination_loss(
        w_sim, query_now, cands
    )


def intrinsic_reward_decomposed(
    w_sim: np.ndarray,
    cands: CandidateSet,
    query_now: np.ndarray,
    query_prev: np.ndarray,
) -> tuple[float, float, float]:
    """Split the bonus into positive-alignment gain and a crowding penalty.

    Returns (gain, penalty, total) with total == gain + penalty, where the
    gain rewards scoring the positive higher under the updated belief and
    the penalty compares the two denominators.
    """
    s_pos_now, s_neg_now = _scores(w_sim, query_now, cands)
    s_pos_prev, s_neg_prev = _scores(w_sim, query_prev, cands)
    gain = s_pos_now - s_pos_prev
    penalty = _logsumexp(s_neg_prev) - _logsumexp(np.append(s_neg_now, s_pos_now))
    return gain, penalty, gain + penalty


def shape_reward(env_reward: float, aux_reward: float, alpha: float) -> float:
    return env_reward + alpha * aux_reward


# -- brute-force information oracles -------------------------------------


def mi_oracle(joint: np.ndarray) -> float:
    """Exact mutual information of a discrete joint table, in nats."""
    joint = np.asarray(joint, dtype=np.float64)
    if np.any(joint < 0):
        raise ConfigurationError("joint table has negative entries")
    total = float(joint.sum())
    if abs(total - 1.0) > 1e-8:
        raise ConfigurationError(f"joint table sums to {total}, not 1")
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    terms = []
    for i in range(joint.shape[0]):
        for j in range(joint.shape[1]):
            p = joint[i, j]
            if p > 0.0:
                terms.append(p * math.log(p / (px[i] * py[j])))
    return math.fsum(terms)


def optimal_critic(joint: np.ndarray) -> np.ndarray:
    """Pointwise log density ratio log p(x,y) / (p(x) p(y))."""
    joint = np.asarray(joint, dtype=np.float64)
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.log(joint / (px * py))
    f[~np.isfinite(f)] = -50.0  # zero-probability cells never get sampled
    return f


def bound_margins(
    joint: np.ndarray,
    n_negatives: int,
    n_samples: int,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Monte Carlo check of both contrastive bounds with the exact critic.

    Draws (x, y) pairs from the joint and negatives from the y-marginal.
    Returns the true information, both bound estimates (each already
    including its log W term with W = n_negatives + 1), and standard
    errors. Up to sampling noise, `lower` stays below the information and
    `upper` above it.
    """
    joint = np.asarray(joint, dtype=np.float64)
    mi = mi_oracle(joint)
    f = optimal_critic(joint)
    n_x, n_y = joint.shape
    flat = joint.reshape(-1)
    py = joint.sum(axis=0)
    w = n_negatives + 1

    pair_idx = rng.choice(n_x * n_y, size=n_samples, p=flat)
    xs, ys = np.unravel_index(pair_idx, joint.shape)
    lower_samples = np.empty(n_samples)
    upper_samples = np.empty(n_samples)
    for s in range(n_samples):
        negs = rng.choice(n_y, size=n_negatives, p=py)
        s_pos = f[xs[s], ys[s]]
        s_neg = f[xs[s], negs]
        lower_samples[s] = math.log(w) - (_logsumexp(np.append(s_neg, s_pos)) - s_pos)
        upper_samples[s] = math.log(w) - (_logsumexp(s_neg) - s_pos)
    return {
        "mi": mi,
        "lower": float(lower_samples.mean()),
        "lower_sigma": float(lower_samples.std(ddof=1) / np.sqrt(n_samples)),
        "upper": float(upper_samples.mean()),
        "upper_sigma": float(upper_samples.std(ddof=1) / np.sqrt(n_samples)),
    }


# -- collection-time bonus computation ------------------------------------


class RewardComputer:
    """Streams the intrinsic bonus during one exploration episode.

    Snapshots the encoder and similarity parameters when built, keeps the
    growing prefix of this episode's transitions, and refreshes positive
    and negative keys from replay at every step. Returns zero while
    disabled (encoder pretraining) or while any required buffer is empty.
    With `use_regularizer=False` only the positive-alignment component of
    the bonus is paid out and the denominator term is dropped.
    """

    def __init__(
        self,
        spec: EncoderSpec,
        enc_params: ParamSet,
        w_sim: np.ndarray,
        own: TaskBuffers,
        others: list[TaskBuffers],
        batch_size: int,
        rng: np.random.Generator,
        enabled: bool = True,
        use_regularizer: bool = True,
    ):
        self.spec = spec
        self.enc = enc_params.copy()
        self.w_sim = np.array(w_sim, dtype=np.float64)
        self.own = own
        self.others = list(others)
        self.batch_size = batch_size
        self.rng = rng
        self.enabled = enabled
        self.use_regularizer = use_regularizer
        self._prefix: list[np.ndarray] = []

    def reset(self) -> None:
        self._prefix = []

    def _belief_mean(self, rows: list[np.ndarray]) -> np.ndarray:
        if not rows:
            return np.zeros(self.spec.latent_dim)
        return encode(self.spec, self.enc, np.stack(rows, axis=0)).mean

    def reward(self, transition) -> float:
        """Bonus for `transition`; also extends the episode prefix."""
        row = np.concatenate(
            [
                transition.obs,
                transition.action,
                [transition.env_reward],
                transition.next_obs,
            ]
        )
        prev_rows = self._prefix
        self._prefix = prev_rows + [row]
        if not self.enabled:
            return 0.0
        ready = [b for b in self.others if b.sizes()["encoder"] > 0]
        if self.own.sizes()["encoder"] == 0 or not ready:
            return 0.0
        pos_batch = self.own.sample_rl_batch("encoder", self.batch_size, self.rng)
        positive = encode(self.spec, self.enc, encoder_inputs(pos_batch)).mean
        negatives = np.stack(
            [
                encode(
                    self.spec,
                    self.enc,
                    encoder_inputs(b.sample_rl_batch("encoder", self.batch_size, self.rng)),
                ).mean
                for b in ready
            ],
            axis=0,
        )
        cands = CandidateSet(positive=positive, negatives=negatives)
        query_prev = self._belief_mean(prev_rows)
        query_now = self._belief_mean(self._prefix)
        if self.use_regularizer:
            return intrinsic_reward(self.w_sim, cands, query_now, query_prev)
        gain, _, _ = intrinsic_reward_decomposed(self.w_sim, cands, query_now, query_prev)
        return gain
