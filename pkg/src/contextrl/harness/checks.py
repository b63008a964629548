"""Built-in verification battery for gradients and information bounds.

`self_check` re-derives every training gradient with central differences
and the information quantities with brute-force oracles. The `corrupt`
argument deliberately perturbs one loss's gradient to demonstrate the
battery actually catches bad gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..agents import (
    SacConfig,
    actor_loss_builder,
    compute_targets,
    critic_loss_builder,
    make_agent,
    temperature_loss_builder,
)
from ..approx import (
    MlpSpec,
    ParamSet,
    autodiff as ad,
    fd_error,
    mlp_init,
    mlp_forward_nodes,
    value_and_grad,
)
from ..context import EncoderSpec, EncoderTrainer, product_of_gaussians
from ..context.training import contrastive_loss
from ..errors import ConfigurationError
from ..explore import (
    CandidateSet,
    bound_margins,
    intrinsic_reward,
    intrinsic_reward_decomposed,
    mi_oracle,
)
from ..replay import TransitionBatch

CORRUPTIBLE = ("critic", "actor", "encoder")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _synthetic_batch(rng, n=6, shift=0.0):
    return TransitionBatch(
        obs=rng.normal(shift, 1.0, (n, 2)),
        action=np.clip(rng.normal(0.0, 1.0, (n, 2)), -1, 1),
        reward=rng.normal(shift, 1.0, n),
        next_obs=rng.normal(shift, 1.0, (n, 2)),
        done=np.zeros(n),
        task_id="check",
    )


def _checked_fd(loss_fn, params, rng, tol, corrupted: bool):
    """FD comparison, optionally with a deliberately damaged gradient."""
    _, grads = value_and_grad(loss_fn, params)
    if corrupted:
        first = grads.names()[0]
        grads[first] = grads[first] + 0.05
    err = fd_error(loss_fn, params, grads, rng, max_coords=30)
    return err < tol, f"max relative gradient error {err:.2e} (tolerance {tol:.0e})"


def self_check(seed: int = 0, corrupt: str | None = None) -> list[CheckResult]:
    if corrupt is not None and corrupt not in CORRUPTIBLE:
        raise ConfigurationError(
            f"corrupt must be one of {CORRUPTIBLE}, got {corrupt!r}"
        )
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def record(name: str, passed: bool, detail: str):
        results.append(CheckResult(name=name, passed=passed, detail=detail))

    # Quadratic loss: central differences are near-exact, tight tolerance.
    params = ParamSet({"x": rng.normal(size=5)})
    ok, detail = _checked_fd(
        lambda nodes: (nodes["x"] * nodes["x"]).sum() + 2.0 * nodes["x"].sum(),
        params,
        rng,
        1e-7,
        corrupted=False,
    )
    record("quadratic_gradient", ok, detail)

    # Generic MLP regression loss.
    spec = MlpSpec((4, 12, 3), activation="tanh")
    mlp_params = mlp_init(spec, seed=seed + 1)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def mlp_loss(nodes):
        out = mlp_forward_nodes(spec, nodes, ad.constant(x))
        diff = out - ad.constant(target)
        return (diff * diff).mean()

    ok, detail = _checked_fd(mlp_loss, mlp_params, rng, 1e-4, corrupted=False)
    record("mlp_gradient", ok, detail)

    # Gaussian fusion: N(0,1) x N(2,1) must give N(1, 1/2).
    mean, var = product_of_gaussians(np.array([[0.0], [2.0]]), np.ones((2, 1)))
    ok = abs(mean[0] - 1.0) < 1e-12 and abs(var[0] - 0.5) < 1e-12
    record("gaussian_fusion", ok, f"got mean {mean[0]:.12f}, var {var[0]:.12f}")

    # Uniform contrastive scores cost exactly log(batch).
    val = contrastive_loss(np.full((4, 4), 1.7))
    ok = abs(val - np.log(4.0)) < 1e-12
    record("contrastive_uniform", ok, f"loss {val:.12f} vs log(4) {np.log(4.0):.12f}")

    # Intrinsic bonus decomposition is an algebraic identity.
    worst = 0.0
    for _ in range(1000):
        dim = int(rng.integers(2, 5))
        w = rng.normal(size=(dim, dim))
        cands = CandidateSet(
            positive=rng.normal(size=dim),
            negatives=rng.normal(size=(int(rng.integers(1, 5)), dim)),
        )
        q_now, q_prev = rng.normal(size=dim), rng.normal(size=dim)
        gain, penalty, total = intrinsic_reward_decomposed(w, cands, q_now, q_prev)
        direct = intrinsic_reward(w, cands, q_now, q_prev)
        worst = max(worst, abs(total - (gain + penalty)), abs(total - direct))
    record("bonus_decomposition", worst < 1e-9, f"worst identity gap {worst:.2e}")

    # Discrete information oracle on known tables.
    ok = abs(mi_oracle(np.full((4, 4), 1 / 16))) < 1e-12 and abs(
        mi_oracle(np.diag(np.full(5, 1 / 5))) - np.log(5.0)
    ) < 1e-12
    record("information_oracle", ok, "independent table 0, diagonal table log 5")

    # Contrastive bounds bracket the true information (exact critic).
    margins_ok = True
    detail_parts = []
    for _ in range(3):
        joint = rng.dirichlet(np.ones(12)).reshape(3, 4)
        out = bound_margins(joint, n_negatives=7, n_samples=1200, rng=rng)
        low_ok = out["lower"] <= out["mi"] + 3 * out["lower_sigma"]
        up_ok = out["upper"] >= out["mi"] - 3 * out["upper_sigma"]
        margins_ok = margins_ok and low_ok and up_ok
        detail_parts.append(
            f"I={out['mi']:.3f} in [{out['lower']:.3f}, {out['upper']:.3f}]"
        )
    record("bound_bracketing", margins_ok, "; ".join(detail_parts))

    # Encoder training loss (contrastive + dynamics + KL path).
    enc_spec = EncoderSpec(obs_dim=2, action_dim=2, latent_dim=3, hidden=(12,))
    trainer = EncoderTrainer(enc_spec, mode="cl+dp", beta=0.1, seed=seed + 2)
    pairs = [
        (_synthetic_batch(rng, shift=0.0), _synthetic_batch(rng, shift=0.0)),
        (_synthetic_batch(rng, shift=2.0), _synthetic_batch(rng, shift=2.0)),
    ]
    loss_fn, _ = trainer.make_loss_fn(pairs, np.random.default_rng(seed + 3))
    ok, detail = _checked_fd(
        loss_fn, trainer.params, rng, 1e-4, corrupted=(corrupt == "encoder")
    )
    record("encoder_loss_gradient", ok, detail)

    # The three agent losses.
    cfg = SacConfig(obs_dim=2, action_dim=2, latent_dim=3, hidden=(12,))
    agent = make_agent(cfg, seed=seed + 4)
    batch = _synthetic_batch(rng)
    z = rng.normal(size=3)
    y = compute_targets(agent, batch, z, rng)
    critic_fn, critic_params, _ = critic_loss_builder(agent, batch, z, y)
    ok, detail = _checked_fd(
        critic_fn, critic_params, rng, 1e-4, corrupted=(corrupt == "critic")
    )
    record("critic_loss_gradient", ok, detail)

    eps = rng.standard_normal((len(batch), 2))
    actor_fn, actor_params, _ = actor_loss_builder(agent, batch, z, eps)
    ok, detail = _checked_fd(
        actor_fn, actor_params, rng, 1e-4, corrupted=(corrupt == "actor")
    )
    record("actor_loss_gradient", ok, detail)

    temp_fn, temp_params = temperature_loss_builder(agent, mean_logp=-1.1)
    ok, detail = _checked_fd(temp_fn, temp_params, rng, 1e-7, corrupted=False)
    record("temperature_loss_gradient", ok, detail)

    # Critic loss with the latent traced through the encoder.
    rv_trainer = EncoderTrainer(enc_spec, mode="rv", seed=seed + 5)
    enc_batch = _synthetic_batch(rng, n=4)
    z_eps = rng.standard_normal(3)
    named = ParamSet()
    for name, arr in rv_trainer.encoder_params().items():
        named["enc." + name] = arr

    def make_z(nodes):
        inner = {k[len("enc."):]: v for k, v in nodes.items()}
        return rv_trainer.traced_latent(inner, enc_batch, z_eps)

    z_val = make_z({k: ad.Node(v) for k, v in named.items()}).value
    y2 = compute_targets(agent, batch, z_val, rng)
    traced_fn, traced_params, _ = critic_loss_builder(
        agent, batch, z_val, y2, z_trace=(named, make_z)
    )
    ok, detail = _checked_fd(traced_fn, traced_params, rng, 1e-4, corrupted=False)
    record("traced_context_gradient", ok, detail)

    return results


def format_results(results: list[CheckResult]) -> str:
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"[{status}] {r.name}: {r.detail}")
    n_bad = sum(1 for r in results if not r.passed)
    lines.append(
        f"{len(results) - n_bad}/{len(results)} checks passed"
        + (f" ({n_bad} FAILED)" if n_bad else "")
    )
    return "\n".join(lines)
