"""Soft actor-critic agents conditioned on a task latent.

Two independent instances of this agent are used: one collects with a
shaped exploration reward, the other learns the execution policy on raw
environment rewards. Each agent owns a tanh-squashed Gaussian actor, twin
critics with slowly tracking target copies, and a learned entropy
temperature. All observations are concatenated with the task latent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import (
    MlpSpec,
    OptState,
    ParamSet,
    adam_step,
    autodiff as ad,
    ema_update,
    mlp_forward,
    mlp_forward_nodes,
    mlp_init,
    value_and_grad,
)
from .errors import ConfigurationError
from .replay import TransitionBatch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class SacConfig:
    obs_dim: int
    action_dim: int
    latent_dim: int
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    rho: float = 0.995  # target-network retention per update
    lr: float = 3e-4
    init_temperature: float = 0.1
    target_entropy: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigurationError(f"rho must be in [0, 1], got {self.rho}")
        if self.init_temperature <= 0.0:
            raise ConfigurationError("initial temperature must be positive")

    @property
    def entropy_target(self) -> float:
        if self.target_entropy is not None:
            return self.target_entropy
        return -float(self.action_dim)

    @property
    def actor_spec(self) -> MlpSpec:
        return MlpSpec(
            (self.obs_dim + self.latent_dim, *self.hidden, 2 * self.action_dim)
        )

    @property
    def critic_spec(self) -> MlpSpec:
        return MlpSpec(
            (self.obs_dim + self.action_dim + self.latent_dim, *self.hidden, 1)
        )


@dataclass
class SacAgent:
    cfg: SacConfig
    actor: ParamSet
    critics: ParamSet  # names q1.* and q2.*
    targets: ParamSet  # same names, slowly tracking copies
    temp: ParamSet  # single entry: log_temp
    opt_actor: OptState
    opt_critic: OptState
    opt_temp: OptState

    def temperature(self) -> float:
        return float(np.exp(self.temp["log_temp"]))

    def to_params(self) -> ParamSet:
        merged = ParamSet()
        merged.merge("actor", self.actor)
        merged.merge("critic", self.critics)
        merged.merge("target", self.targets)
        merged.merge("temp", self.temp)
        return merged

    def load_from(self, merged: ParamSet) -> None:
        self.actor = merged.prefixed("actor")
        self.critics = merged.prefixed("critic")
        self.targets = merged.prefixed("target")
        self.temp = merged.prefixed("temp")


def make_agent(cfg: SacConfig, seed: int) -> SacAgent:
    actor = mlp_init(cfg.actor_spec, seed)
    # Shrink the output layer so untrained deterministic actions start
    # near zero and initial log-std stays near the clamp interior.
    last = len(cfg.actor_spec.layer_sizes) - 2
    actor[f"w{last}"] = actor[f"w{last}"] * 0.01
    critics = ParamSet()
    critics.merge("q1", mlp_init(cfg.critic_spec, seed + 1))
    critics.merge("q2", mlp_init(cfg.critic_spec, seed + 2))
    temp = ParamSet({"log_temp": np.array(np.log(cfg.init_temperature))})
    return SacAgent(
        cfg=cfg,
        actor=actor,
        critics=critics,
        targets=critics.copy(),
        temp=temp,
        opt_actor=OptState(lr=cfg.lr),
        opt_critic=OptState(lr=cfg.lr),
        opt_temp=OptState(lr=cfg.lr),
    )


def _actor_heads(cfg: SacConfig, actor: ParamSet, x: np.ndarray):
    out = mlp_forward(cfg.actor_spec, actor, x)
    da = cfg.action_dim
    mean = out[..., :da]
    log_std = np.clip(out[..., da:], LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def act(
    agent: SacAgent,
    obs: np.ndarray,
    z: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> np.ndarray:
    x = np.concatenate([obs, z])
    mean, log_std = _actor_heads(agent.cfg, agent.actor, x)
    if deterministic:
        return np.tanh(mean)
    u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return np.tanh(u)


def _gaussian_logp(eps: np.ndarray, log_std: np.ndarray, squashed: np.ndarray) -> np.ndarray:
    pre = (-0.5 * eps**2 - log_std - 0.5 * LOG_2PI).sum(axis=-1)
    correction = np.log(1.0 - squashed**2 + SQUASH_EPS).sum(axis=-1)
    return pre - correction


def sample_actions(
    agent: SacAgent, obs: np.ndarray, z_rows: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Stochastic actions and their log-probabilities, no tracing."""
    x = np.concatenate([obs, z_rows], axis=1)
    mean, log_std = _actor_heads(agent.cfg, agent.actor, x)
    eps = rng.standard_normal(mean.shape)
    u = mean + np.exp(log_std) * eps
    a = np.tanh(u)
    return a, _gaussian_logp(eps, log_std, a)


def compute_targets(
    agent: SacAgent, batch: TransitionBatch, z: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Bootstrapped soft targets y = r + gamma (1-d) (min Q' - tau log pi)."""
    n = len(batch)
    z_rows = np.broadcast_to(z, (n, z.shape[0]))
    next_a, next_logp = sample_actions(agent, batch.next_obs, z_rows, rng)
    x = np.concatenate([batch.next_obs, next_a, z_rows], axis=1)
    q1 = mlp_forward(agent.cfg.critic_spec, agent.targets.prefixed("q1"), x)[:, 0]
    q2 = mlp_forward(agent.cfg.critic_spec, agent.targets.prefixed("q2"), x)[:, 0]
    soft_value = np.minimum(q1, q2) - agent.temperature() * next_logp
    return batch.reward + agent.cfg.gamma * (1.0 - batch.done) * soft_value


def critic_loss_builder(
    agent: SacAgent,
    batch: TransitionBatch,
    z: np.ndarray,
    y: np.ndarray,
    z_trace: tuple[ParamSet, "callable"] | None = None,
):
    """Loss closure over critic parameters (plus traced-context parameters).

    `z_trace`, when given, is (extra_params, make_z) where `make_z` maps
    the extra parameters' nodes to a latent Node; the critic loss then
    carries gradient into those parameters as well. Otherwise `z` enters
    as a constant.
    """
    cfg = agent.cfg
    n = len(batch)
    sa = np.concatenate([batch.obs, batch.action], axis=1)
    y_const = y.copy()
    params = agent.critics.copy()
    extra_names: list[str] = []
    if z_trace is not None:
        extra, make_z = z_trace
        for name, arr in extra.items():
            if name in params:
                raise ConfigurationError(f"traced-context name collides: {name}")
            params[name] = arr
        extra_names = list(extra.names())

    def loss_fn(nodes):
        if z_trace is None:
            z_node = ad.constant(z)
        else:
            z_node = z_trace[1]({k: nodes[k] for k in extra_names})
        x = ad.concat([ad.constant(sa), ad.tile_rows(z_node, n)])
        q1_nodes = {k[len("q1."):]: v for k, v in nodes.items() if k.startswith("q1.")}
        q2_nodes = {k[len("q2."):]: v for k, v in nodes.items() if k.startswith("q2.")}
        q1 = mlp_forward_nodes(cfg.critic_spec, q1_nodes, x)[(slice(None), 0)]
        q2 = mlp_forward_nodes(cfg.critic_spec, q2_nodes, x)[(slice(None), 0)]
        d1 = q1 - ad.constant(y_const)
        d2 = q2 - ad.constant(y_const)
        return (d1 * d1).mean() + (d2 * d2).mean()

    return loss_fn, params, extra_names


def actor_loss_builder(
    agent: SacAgent, batch: TransitionBatch, z: np.ndarray, eps: np.ndarray
):
    """Reparameterized policy loss over actor parameters; critics frozen.

    Returns (loss_fn, params, aux); aux["logp"] holds the batch mean
    log-probability from the latest evaluation, which the temperature
    update consumes.
    """
    cfg = agent.cfg
    n = len(batch)
    z_rows = np.broadcast_to(z, (n, z.shape[0])).copy()
    obs_z = np.concatenate([batch.obs, z_rows], axis=1)
    temp_value = agent.temperature()
    critic_nodes = {k: ad.constant(v) for k, v in agent.critics.items()}
    q1_nodes = {k[len("q1."):]: v for k, v in critic_nodes.items() if k.startswith("q1.")}
    q2_nodes = {k[len("q2."):]: v for k, v in critic_nodes.items() if k.startswith("q2.")}
    aux: dict[str, float] = {}
    da = cfg.action_dim

    def loss_fn(nodes):
        out = mlp_forward_nodes(cfg.actor_spec, nodes, ad.constant(obs_z))
        mean = out[(slice(None), slice(0, da))]
        log_std = ad.clip(out[(slice(None), slice(da, 2 * da))], LOG_STD_MIN, LOG_STD_MAX)
        u = mean + ad.exp(log_std) * ad.constant(eps)
        a = ad.tanh(u)
        pre = (-0.5 * ad.constant(eps * eps) - log_std - 0.5 * LOG_2PI).sum(axis=1)
        corr = ad.log(1.0 - a * a + SQUASH_EPS).sum(axis=1)
        logp = pre - corr
        x = ad.concat([ad.constant(batch.obs), a, ad.constant(z_rows)])
        q1 = mlp_forward_nodes(cfg.critic_spec, q1_nodes, x)[(slice(None), 0)]
        q2 = mlp_forward_nodes(cfg.critic_spec, q2_nodes, x)[(slice(None), 0)]
        q_min = ad.minimum(q1, q2)
        aux["logp"] = float(logp.value.mean())
        return (temp_value * logp - q_min).mean()

    return loss_fn, agent.actor, aux


def temperature_loss_builder(agent: SacAgent, mean_logp: float):
    """Temperature moves to hold policy entropy near the configured target."""
    drive = mean_logp + agent.cfg.entropy_target

    def loss_fn(nodes):
        return -ad.exp(nodes["log_temp"]) * drive

    return loss_fn, agent.temp


def sac_update(
    agent: SacAgent,
    batch: TransitionBatch,
    z: np.ndarray,
    rng: np.random.Generator,
    z_trace: tuple[ParamSet, "callable"] | None = None,
) -> tuple[dict[str, float], ParamSet | None]:
    """One full update: critics, actor, temperature, then target tracking.

    Returns metrics and, when `z_trace` is supplied, the loss gradient with
    respect to the traced-context parameters (the agent itself never
    applies those).
    """
    y = compute_targets(agent, batch, z, rng)

    loss_fn, params, extra_names = critic_loss_builder(agent, batch, z, y, z_trace)
    critic_value, grads = value_and_grad(loss_fn, params)
    critic_grads = ParamSet({k: grads[k] for k in agent.critics})
    agent.critics = adam_step(agent.critics, critic_grads, agent.opt_critic)
    extra_grads = None
    if extra_names:
        extra_grads = ParamSet({k: grads[k] for k in extra_names})

    eps = rng.standard_normal((len(batch), agent.cfg.action_dim))
    actor_loss_fn, actor_params, aux = actor_loss_builder(agent, batch, z, eps)
    actor_value, actor_grads = value_and_grad(actor_loss_fn, actor_params)
    agent.actor = adam_step(agent.actor, actor_grads, agent.opt_actor)

    temp_loss_fn, temp_params = temperature_loss_builder(agent, aux["logp"])
    temp_value, temp_grads = value_and_grad(temp_loss_fn, temp_params)
    agent.temp = adam_step(agent.temp, temp_grads, agent.opt_temp)

    agent.targets = ema_update(agent.targets, agent.critics, agent.cfg.rho)

    metrics = {
        "critic_loss": critic_value,
        "actor_loss": actor_value,
        "temperature_loss": temp_value,
        "temperature": agent.temperature(),
        "entropy": -aux["logp"],
        "target_y_mean": float(y.mean()),
    }
    return metrics, extra_grads
