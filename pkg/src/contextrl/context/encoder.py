"""Task-belief encoder: transitions in, Gaussian latent belief out.

Each transition (obs, action, reward, next obs) maps through an MLP to an
independent Gaussian factor over the latent; the batch posterior is their
product. A deterministic variant averages the factor means and carries unit
variance so downstream code can treat both the same way.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..approx import MlpSpec, ParamSet, autodiff as ad, mlp_forward, mlp_forward_nodes, mlp_init
from ..errors import ShapeError
from ..replay import TransitionBatch

LOGVAR_MIN = -6.0
LOGVAR_MAX = 6.0


@dataclass(frozen=True)
class EncoderSpec:
    """Geometry of the belief encoder for one task family."""

    obs_dim: int
    action_dim: int
    latent_dim: int = 7
    hidden: tuple[int, ...] = (64, 64)
    deterministic: bool = False
    momentum: float = 0.99

    @property
    def input_dim(self) -> int:
        return 2 * self.obs_dim + self.action_dim + 1

    @property
    def mlp(self) -> MlpSpec:
        return MlpSpec((self.input_dim, *self.hidden, 2 * self.latent_dim))


@dataclass
class Belief:
    """Gaussian task belief with diagonal covariance."""

    mean: np.ndarray
    var: np.ndarray
    deterministic: bool = False

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.deterministic:
            return self.mean.copy()
        return self.mean + np.sqrt(self.var) * rng.standard_normal(self.mean.shape)

    def kl_to_standard(self) -> float:
        """KL( N(mean, var) || N(0, I) ), summed over dimensions."""
        return float(0.5 * np.sum(self.var + self.mean**2 - 1.0 - np.log(self.var)))


def init_encoder(spec: EncoderSpec, seed: int) -> ParamSet:
    return mlp_init(spec.mlp, seed)


def prior_belief(spec: EncoderSpec) -> Belief:
    return Belief(
        mean=np.zeros(spec.latent_dim),
        var=np.ones(spec.latent_dim),
        deterministic=spec.deterministic,
    )


def encoder_inputs(batch: TransitionBatch) -> np.ndarray:
    """Stack (obs, action, reward, next_obs) rows for the encoder MLP."""
    return np.concatenate(
        [batch.obs, batch.action, batch.reward[:, None], batch.next_obs], axis=1
    )


def product_of_gaussians(mu: np.ndarray, var: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Precision-weighted fusion of independent Gaussian factors (rows)."""
    prec = 1.0 / var
    post_var = 1.0 / prec.sum(axis=0)
    post_mean = post_var * (mu * prec).sum(axis=0)
    return post_mean, post_var


def encode(spec: EncoderSpec, params: ParamSet, inputs: np.ndarray) -> Belief:
    """Belief from a stack of encoder inputs; empty input gives the prior."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        if inputs.size == 0:
            return prior_belief(spec)
        raise ShapeError(f"encoder inputs shape {inputs.shape}, want (*, {spec.input_dim})")
    if inputs.shape[0] == 0:
        return prior_belief(spec)
    raw = mlp_forward(spec.mlp, params, inputs)
    z = spec.latent_dim
    mu = raw[:, :z]
    logvar = np.clip(raw[:, z:], LOGVAR_MIN, LOGVAR_MAX)
    if spec.deterministic:
        return Belief(mean=mu.mean(axis=0), var=np.ones(z), deterministic=True)
    mean, var = product_of_gaussians(mu, np.exp(logvar))
    return Belief(mean=mean, var=var, deterministic=False)


def encode_batch(spec: EncoderSpec, params: ParamSet, batch: TransitionBatch) -> Belief:
    return encode(spec, params, encoder_inputs(batch))


def encode_nodes(
    spec: EncoderSpec, nodes: dict[str, ad.Node], inputs: np.ndarray
) -> tuple[ad.Node, ad.Node]:
    """Traced belief (mean, var) so gradients reach the encoder weights."""
    raw = mlp_forward_nodes(spec.mlp, nodes, ad.constant(inputs))
    z = spec.latent_dim
    mu = raw[(slice(None), slice(0, z))]
    logvar = ad.clip(raw[(slice(None), slice(z, 2 * z))], LOGVAR_MIN, LOGVAR_MAX)
    if spec.deterministic:
        return mu.mean(axis=0), ad.constant(np.ones(z))
    prec = 1.0 / ad.exp(logvar)
    post_var = 1.0 / prec.sum(axis=0)
    post_mean = post_var * (mu * prec).sum(axis=0)
    return post_mean, post_var


def kl_to_standard_nodes(mean: ad.Node, var: ad.Node) -> ad.Node:
    return 0.5 * (var + mean * mean - 1.0 - ad.log(var)).sum()


def export_embeddings(
    path: str,
    spec: EncoderSpec,
    params: ParamSet,
    batches: list[tuple[str, TransitionBatch]],
) -> None:
    """Write one belief mean per task as CSV: task_id,z1,...,zN."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id"] + [f"z{i + 1}" for i in range(spec.latent_dim)])
        for task_id, batch in batches:
            belief = encode_batch(spec, params, batch)
            writer.writerow([task_id] + [repr(float(v)) for v in belief.mean])
