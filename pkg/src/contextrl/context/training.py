"""Encoder training: contrastive discrimination, dynamics heads, updates.

The trainer owns the query encoder, a momentum copy used to embed keys, a
bilinear similarity matrix, and two optional dynamics prediction heads.
One `train_step` consumes a meta-batch of (query, key) transition batches,
one pair per task, and applies a single Adam update to whichever parts the
configured mode trains.
"""

from __future__ import annotations

import numpy as np

from ..approx import (
    MlpSpec,
    OptState,
    ParamSet,
    adam_step,
    autodiff as ad,
    ema_update,
    mlp_forward_nodes,
    mlp_init,
    value_and_grad,
)
from ..errors import ConfigurationError
from ..replay import TransitionBatch
from .encoder import (
    Belief,
    EncoderSpec,
    encode,
    encode_nodes,
    encoder_inputs,
    kl_to_standard_nodes,
)

MODES = ("cl", "rv", "dp", "cl+rv", "cl+dp")


def similarity_matrix(queries: np.ndarray, w: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Bilinear scores: entry (i, j) compares query i against key j."""
    return queries @ w @ keys.T


def contrastive_loss(scores: np.ndarray) -> float:
    """Mean over rows of -log softmax(diagonal); rows are queries."""
    scores = np.asarray(scores, dtype=np.float64)
    shift = scores.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(scores - shift).sum(axis=1)) + shift[:, 0]
    return float(np.mean(logsum - np.diag(scores)))


def contrastive_loss_nodes(
    queries: list[ad.Node], keys: np.ndarray, w: ad.Node
) -> ad.Node:
    """Traced version of `contrastive_loss`; keys stay constant."""
    keys_t = ad.constant(keys.T)
    total = None
    for i, q in enumerate(queries):
        row = (q @ w) @ keys_t
        term = ad.logsumexp(row) - row[i]
        total = term if total is None else total + term
    return total * (1.0 / len(queries))


def _parse_mode(mode: str) -> frozenset[str]:
    canon = mode.strip().lower()
    if canon not in MODES:
        raise ConfigurationError(f"encoder mode must be one of {MODES}, got {mode!r}")
    return frozenset(canon.split("+"))


class EncoderTrainer:
    """Owns encoder parameters and applies one update per meta-batch."""

    def __init__(
        self,
        spec: EncoderSpec,
        mode: str = "cl",
        beta: float = 0.1,
        contrastive_scale: float = 1.0,
        lr: float = 3e-4,
        seed: int = 0,
    ):
        if beta < 0 or contrastive_scale < 0:
            raise ConfigurationError("loss weights must be nonnegative")
        self.spec = spec
        self.parts = _parse_mode(mode)
        self.mode = mode.strip().lower()
        self.beta = beta
        self.contrastive_scale = contrastive_scale

        z = spec.latent_dim
        dim_in = spec.obs_dim + spec.action_dim + z
        self.fwd_spec = MlpSpec((dim_in, *spec.hidden, spec.obs_dim + 1))
        self.bwd_spec = MlpSpec((dim_in, *spec.hidden, spec.obs_dim))

        # All parts always exist so checkpoints look the same in every mode;
        # parts outside the mode simply never receive gradient.
        self.params = ParamSet()
        self.params.merge("enc", mlp_init(spec.mlp, seed))
        self.params["sim.w"] = np.eye(z)
        self.params.merge("dp_fwd", mlp_init(self.fwd_spec, seed + 1))
        self.params.merge("dp_bwd", mlp_init(self.bwd_spec, seed + 2))
        self.key = self.params.prefixed("enc").copy()
        self.opt = OptState(lr=lr)
        self.steps = 0

    @property
    def uses_cl(self) -> bool:
        return "cl" in self.parts

    @property
    def uses_rv(self) -> bool:
        return "rv" in self.parts

    @property
    def uses_dp(self) -> bool:
        return "dp" in self.parts

    def encode_batch(self, batch: TransitionBatch) -> Belief:
        return encode(self.spec, self.params.prefixed("enc"), encoder_inputs(batch))

    def encode_inputs(self, inputs: np.ndarray) -> Belief:
        return encode(self.spec, self.params.prefixed("enc"), inputs)

    def key_encode_batch(self, batch: TransitionBatch) -> Belief:
        return encode(self.spec, self.key, encoder_inputs(batch))

    def sim_matrix(self) -> np.ndarray:
        return self.params["sim.w"].copy()

    def encoder_params(self) -> ParamSet:
        return self.params.prefixed("enc")

    def traced_latent(
        self, enc_nodes: dict[str, ad.Node], batch: TransitionBatch, eps: np.ndarray
    ) -> ad.Node:
        """Reparameterized latent as a Node over encoder parameter nodes.

        Used by value-prediction training: a critic loss built on this node
        backpropagates into the encoder weights.
        """
        mean, var = encode_nodes(self.spec, enc_nodes, encoder_inputs(batch))
        if self.spec.deterministic:
            return mean
        return mean + ad.sqrt(var) * ad.constant(eps)

    def _dp_loss(
        self, nodes: dict[str, ad.Node], batch: TransitionBatch, z: ad.Node
    ) -> ad.Node:
        n = len(batch)
        z_rows = ad.tile_rows(z, n)
        fwd_in = ad.concat([ad.constant(np.concatenate([batch.obs, batch.action], axis=1)), z_rows])
        fwd_nodes = {k[len("dp_fwd."):]: v for k, v in nodes.items() if k.startswith("dp_fwd.")}
        pred = mlp_forward_nodes(self.fwd_spec, fwd_nodes, fwd_in)
        fwd_target = ad.constant(
            np.concatenate([batch.next_obs, batch.reward[:, None]], axis=1)
        )
        diff_f = pred - fwd_target
        mse_f = (diff_f * diff_f).mean()

        bwd_in = ad.concat(
            [ad.constant(np.concatenate([batch.next_obs, batch.action], axis=1)), z_rows]
        )
        bwd_nodes = {k[len("dp_bwd."):]: v for k, v in nodes.items() if k.startswith("dp_bwd.")}
        pred_b = mlp_forward_nodes(self.bwd_spec, bwd_nodes, bwd_in)
        diff_b = pred_b - ad.constant(batch.obs)
        mse_b = (diff_b * diff_b).mean()
        # Backward prediction is a weaker signal; it enters at half weight.
        return mse_f + 0.5 * mse_b

    def make_loss_fn(
        self,
        pairs: list[tuple[TransitionBatch, TransitionBatch]],
        rng: np.random.Generator,
    ):
        """Build the step's loss closure; reparameterization noise is drawn
        once here so repeated evaluations (finite differences) agree.

        Returns (loss_fn, metrics); `metrics` fills in on each call.
        """
        m = len(pairs)
        if m < 1:
            raise ConfigurationError("train_step needs at least one task")
        if self.uses_cl and m < 2:
            raise ConfigurationError(
                "contrastive training needs at least two tasks per meta-batch"
            )

        keys = np.stack(
            [self.key_encode_batch(kb).sample(rng) for _, kb in pairs], axis=0
        )
        eps = [rng.standard_normal(self.spec.latent_dim) for _ in range(m)]
        query_inputs = [encoder_inputs(qb) for qb, _ in pairs]
        metrics: dict[str, float] = {}

        def loss_fn(nodes):
            enc_view = {k[len("enc."):]: v for k, v in nodes.items() if k.startswith("enc.")}
            latents: list[ad.Node] = []
            kl_terms: list[ad.Node] = []
            for i in range(m):
                mean, var = encode_nodes(self.spec, enc_view, query_inputs[i])
                if self.spec.deterministic:
                    latents.append(mean)
                else:
                    latents.append(mean + ad.sqrt(var) * ad.constant(eps[i]))
                    kl_terms.append(kl_to_standard_nodes(mean, var))

            total = ad.constant(0.0)
            if self.uses_cl:
                cl = contrastive_loss_nodes(latents, keys, nodes["sim.w"])
                metrics["contrastive"] = float(cl.value)
                total = total + self.contrastive_scale * cl
            if self.uses_dp:
                dp = None
                for i, (qb, _) in enumerate(pairs):
                    term = self._dp_loss(nodes, qb, latents[i])
                    dp = term if dp is None else dp + term
                dp = dp * (1.0 / m)
                metrics["dynamics"] = float(dp.value)
                total = total + dp
            if kl_terms and self.beta > 0:
                kl = kl_terms[0]
                for term in kl_terms[1:]:
                    kl = kl + term
                kl = kl * (1.0 / m)
                metrics["kl"] = float(kl.value)
                total = total + self.beta * kl
            return total

        return loss_fn, metrics

    def train_step(
        self,
        pairs: list[tuple[TransitionBatch, TransitionBatch]],
        rng: np.random.Generator,
        extra_grads: ParamSet | None = None,
    ) -> dict[str, float]:
        """One Adam update from a meta-batch of per-task (query, key) pairs."""
        if extra_grads is not None and not self.uses_rv:
            raise ConfigurationError(
                f"external encoder gradients require an rv mode, not {self.mode!r}"
            )
        loss_fn, metrics = self.make_loss_fn(pairs, rng)
        value, grads = value_and_grad(loss_fn, self.params)
        if extra_grads is not None:
            for name in self.params:
                if name in extra_grads:
                    grads[name] = grads[name] + extra_grads[name]
        self.params = adam_step(self.params, grads, self.opt)
        self.key = ema_update(self.key, self.params.prefixed("enc"), self.spec.momentum)
        self.steps += 1
        metrics["total"] = value
        return metrics
