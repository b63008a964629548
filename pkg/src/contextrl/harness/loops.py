"""Meta-training, meta-testing, evaluation, and checkpointing."""

from __future__ import annotations

import json
import os
import time

import numpy as np

from ..agents import SacConfig, act, make_agent, sac_update
from ..approx import ParamSet, load_params, save_params
from ..context import EncoderSpec, EncoderTrainer, encode, prior_belief
from ..envs import (
    TaskSpec,
    Transition,
    action_dim,
    episode_return,
    load_tasks,
    obs_dim,
    rollout,
    sample_tasks,
    save_tasks,
)
from ..errors import ConfigurationError, EmptyBufferError
from ..explore import RewardComputer
from ..replay import TaskBuffers, TransitionBatch, batch_from_transitions
from .config import RunConfig, load_config, save_config


def encoder_row(tr: Transition) -> np.ndarray:
    """One transition as an encoder input row (environment reward only)."""
    return np.concatenate([tr.obs, tr.action, [tr.env_reward], tr.next_obs])


class MetaLearner:
    """Holds every trainable piece of one run and its random streams."""

    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        do = obs_dim(cfg.env_family)
        da = action_dim(cfg.env_family)
        self.enc_spec = EncoderSpec(
            obs_dim=do,
            action_dim=da,
            latent_dim=cfg.latent_dim,
            hidden=tuple(cfg.hidden_sizes),
            deterministic=cfg.deterministic_encoder,
            momentum=cfg.momentum,
        )
        streams = np.random.SeedSequence(cfg.seed).spawn(5)
        self.collect_rng = np.random.default_rng(streams[0])
        self.batch_rng = np.random.default_rng(streams[1])
        self.trainer_rng = np.random.default_rng(streams[2])
        self.reward_rng = np.random.default_rng(streams[3])
        init_seeds = [int(s) for s in streams[4].generate_state(3)]

        self.trainer = EncoderTrainer(
            self.enc_spec,
            mode=cfg.encoder_mode,
            beta=cfg.beta,
            contrastive_scale=cfg.contrastive_scale,
            lr=cfg.lr,
            seed=init_seeds[0],
        )
        sac_cfg = SacConfig(
            obs_dim=do,
            action_dim=da,
            latent_dim=cfg.latent_dim,
            hidden=tuple(cfg.hidden_sizes),
            gamma=cfg.gamma,
            rho=cfg.rho,
            lr=cfg.lr,
        )
        self.explorer = make_agent(sac_cfg, init_seeds[1])
        self.executor = make_agent(sac_cfg, init_seeds[2])

        self.train_tasks = sample_tasks(cfg.env_family, cfg.train_tasks, cfg.seed, "train")
        self.test_tasks = sample_tasks(
            cfg.env_family, cfg.test_tasks, cfg.seed, "test", ood=cfg.ood
        )
        self.buffers = {
            t.task_id: TaskBuffers(t, alpha=cfg.alpha, capacity=cfg.buffer_capacity)
            for t in self.train_tasks
        }
        self.iteration = 0

    # -- data collection -------------------------------------------------

    def _episode_latent(self, buffers: TaskBuffers, rng: np.random.Generator) -> np.ndarray:
        """Draw one latent from the belief over a fresh encoder batch."""
        try:
            batch = buffers.sample_rl_batch("encoder", self.cfg.encoder_batch_size, rng)
            belief = self.trainer.encode_batch(batch)
        except EmptyBufferError:
            belief = prior_belief(self.enc_spec)
        return belief.sample(rng)

    def collect_iteration(self, pretraining: bool) -> dict[str, float]:
        """One exploration and one execution episode per training task."""
        cfg = self.cfg
        rng = self.collect_rng
        explore_returns = []
        execute_returns = []
        intrinsic: list[float] = []
        for task in self.train_tasks:
            buffers = self.buffers[task.task_id]
            others = [
                self.buffers[t.task_id] for t in self.train_tasks if t.task_id != task.task_id
            ]
            computer = RewardComputer(
                self.enc_spec,
                self.trainer.encoder_params(),
                self.trainer.sim_matrix(),
                buffers,
                others,
                cfg.reward_batch_size,
                self.reward_rng,
                enabled=(not pretraining) and cfg.alpha != 0.0,
                use_regularizer=cfg.regularizer,
            )
            z_exp = self._episode_latent(buffers, rng)

            def on_explore(tr, _buffers=buffers, _computer=computer):
                tr.aux_reward = _computer.reward(tr)
                intrinsic.append(tr.aux_reward)
                _buffers.add(tr, "both")

            explore_returns.append(
                episode_return(
                    rollout(
                        task,
                        lambda obs, r, _z=z_exp: act(self.explorer, obs, _z, r),
                        rng,
                        on_step=on_explore,
                    )
                )
            )

            z_exe = self._episode_latent(buffers, rng)
            execute_returns.append(
                episode_return(
                    rollout(
                        task,
                        lambda obs, r, _z=z_exe: act(self.executor, obs, _z, r),
                        rng,
                        on_step=lambda tr, _buffers=buffers: _buffers.add(tr, "execution"),
                    )
                )
            )
        return {
            "explore_return_mean": float(np.mean(explore_returns)),
            "execute_return_mean": float(np.mean(execute_returns)),
            "intrinsic_mean": float(np.mean(intrinsic)) if intrinsic else 0.0,
        }

    # -- gradient steps ----------------------------------------------------

    def train_iteration(self, pretraining: bool) -> dict[str, float]:
        """grad_steps rounds of agent updates plus one encoder update each."""
        cfg = self.cfg
        rng = self.batch_rng
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}

        def tally(prefix: str, metrics: dict[str, float]):
            for key, value in metrics.items():
                name = f"{prefix}{key}"
                sums[name] = sums.get(name, 0.0) + value
                counts[name] = counts.get(name, 0) + 1

        for _ in range(cfg.grad_steps):
            chosen = rng.choice(len(self.train_tasks), size=cfg.meta_batch, replace=False)
            pairs = []
            rv_grads: ParamSet | None = None
            for idx in chosen:
                task = self.train_tasks[int(idx)]
                buffers = self.buffers[task.task_id]
                q_batch, k_batch = buffers.sample_contrastive_pair(
                    cfg.encoder_batch_size, rng
                )
                pairs.append((q_batch, k_batch))
                if pretraining:
                    continue

                eps = rng.standard_normal(cfg.latent_dim)
                belief = self.trainer.encode_batch(q_batch)
                if self.enc_spec.deterministic:
                    z = belief.mean
                else:
                    z = belief.mean + np.sqrt(belief.var) * eps

                z_trace = None
                if self.trainer.uses_rv:
                    named = ParamSet()
                    for name, arr in self.trainer.encoder_params().items():
                        named["enc." + name] = arr

                    def make_z(nodes, _batch=q_batch, _eps=eps):
                        inner = {k[len("enc."):]: v for k, v in nodes.items()}
                        return self.trainer.traced_latent(inner, _batch, _eps)

                    z_trace = (named, make_z)

                exe_batch = buffers.sample_rl_batch("execution", cfg.batch_size, rng)
                exe_metrics, enc_grads = sac_update(self.executor, exe_batch, z, rng, z_trace)
                tally("executor_", exe_metrics)
                if enc_grads is not None:
                    if rv_grads is None:
                        rv_grads = enc_grads
                    else:
                        for name in enc_grads:
                            rv_grads[name] = rv_grads[name] + enc_grads[name]

                exp_batch = buffers.sample_rl_batch("exploration", cfg.batch_size, rng)
                exp_metrics, _ = sac_update(self.explorer, exp_batch, z, rng)
                tally("explorer_", exp_metrics)

            enc_metrics = self.trainer.train_step(pairs, self.trainer_rng, extra_grads=rv_grads)
            tally("encoder_", enc_metrics)
        return {name: sums[name] / counts[name] for name in sums}

    def run_iteration(self) -> dict[str, float]:
        pretraining = self.iteration < self.cfg.pretrain_iters
        record: dict[str, float] = {}
        record.update(self.collect_iteration(pretraining))
        if self.cfg.grad_steps > 0:
            record.update(self.train_iteration(pretraining))
        self.iteration += 1
        return record


# -- meta-testing ----------------------------------------------------------


def meta_test(
    learner: MetaLearner,
    task: TaskSpec,
    rng: np.random.Generator,
    explore_episodes: int | None = None,
    execution_episodes: int | None = None,
    context_update: str | None = None,
) -> dict:
    """Adapt to one unseen task: explore to build context, then execute.

    Exploration episodes run the stochastic exploration policy, execution
    episodes the deterministic execution policy; every transition feeds the
    task belief. With per-step updates the belief mean is recomputed before
    each action, otherwise once per episode. The score is the return of the
    last execution episode.
    """
    cfg = learner.cfg
    k_explore = cfg.explore_episodes if explore_episodes is None else explore_episodes
    k_execute = (
        cfg.test_execution_episodes if execution_episodes is None else execution_episodes
    )
    update = cfg.context_update if context_update is None else context_update
    if k_explore < 1:
        raise ConfigurationError("meta-test needs at least one exploration episode")
    if k_execute < 1:
        raise ConfigurationError("meta-test needs at least one execution episode")
    if update not in ("step", "episode"):
        raise ConfigurationError(f"context_update must be step or episode, got {update!r}")

    spec = learner.enc_spec
    enc = learner.trainer.encoder_params()
    rows: list[np.ndarray] = []

    def belief_mean() -> np.ndarray:
        if not rows:
            return np.zeros(spec.latent_dim)
        return encode(spec, enc, np.stack(rows, axis=0)).mean

    def run_episode(agent, stochastic: bool) -> float:
        z_holder = [belief_mean()]

        def policy(obs, prng):
            if update == "step":
                z_holder[0] = belief_mean()
            return act(agent, obs, z_holder[0], prng, deterministic=not stochastic)

        transitions = rollout(
            task, policy, rng, on_step=lambda tr: rows.append(encoder_row(tr))
        )
        return episode_return(transitions)

    exploration_returns = [run_episode(learner.explorer, True) for _ in range(k_explore)]
    execution_returns = [run_episode(learner.executor, False) for _ in range(k_execute)]
    return {
        "task_id": task.task_id,
        "exploration_returns": exploration_returns,
        "execution_returns": execution_returns,
        "final_return": execution_returns[-1],
        "context_transitions": len(rows),
    }


def evaluate(
    learner: MetaLearner,
    tasks: list[TaskSpec],
    seed_key: int,
    explore_episodes: int | None = None,
    execution_episodes: int | None = None,
    context_update: str | None = None,
) -> dict:
    """Meta-test every task with its own child stream; aggregate returns."""
    children = np.random.SeedSequence([seed_key, len(tasks)]).spawn(len(tasks))
    per_task: dict[str, float] = {}
    returns = []
    for task, child in zip(tasks, children):
        out = meta_test(
            learner,
            task,
            np.random.default_rng(child),
            explore_episodes,
            execution_episodes,
            context_update,
        )
        per_task[task.task_id] = out["final_return"]
        returns.append(out["final_return"])
    return {
        "mean_return": float(np.mean(returns)),
        "std_return": float(np.std(returns)),
        "returns": per_task,
    }


def collect_embedding_batches(
    learner: MetaLearner,
    tasks: list[TaskSpec],
    episodes: int,
    seed_key: int,
) -> list[tuple[str, TransitionBatch]]:
    """Gather exploration transitions per task for embedding export.

    Runs the stochastic exploration policy with a per-step belief, exactly
    like the exploration phase of meta-testing, and stacks everything seen
    into one batch per task. Deterministic for a given seed key.
    """
    spec = learner.enc_spec
    enc = learner.trainer.encoder_params()
    children = np.random.SeedSequence([seed_key, len(tasks)]).spawn(len(tasks))
    out = []
    for task, child in zip(tasks, children):
        rng = np.random.default_rng(child)
        rows: list[np.ndarray] = []
        collected: list[Transition] = []

        def policy(obs, prng):
            if rows:
                z = encode(spec, enc, np.stack(rows, axis=0)).mean
            else:
                z = np.zeros(spec.latent_dim)
            return act(learner.explorer, obs, z, prng)

        def hook(tr):
            rows.append(encoder_row(tr))
            collected.append(tr)

        for _ in range(episodes):
            rollout(task, policy, rng, on_step=hook)
        out.append((task.task_id, batch_from_transitions(collected)))
    return out


# -- orchestration -----------------------------------------------------------


def save_checkpoint(learner: MetaLearner, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    merged = ParamSet()
    merged.merge("context", learner.trainer.params)
    merged.merge("context_key", learner.trainer.key)
    merged.merge("explorer", learner.explorer.to_params())
    merged.merge("executor", learner.executor.to_params())
    save_params(merged, os.path.join(directory, "checkpoint"))
    save_config(learner.cfg, os.path.join(directory, "config.txt"))
    save_tasks(learner.train_tasks, os.path.join(directory, "tasks_train.txt"))
    save_tasks(learner.test_tasks, os.path.join(directory, "tasks_test.txt"))


def load_learner(directory: str) -> MetaLearner:
    """Rebuild a learner from a run directory written by `save_checkpoint`."""
    cfg = load_config(os.path.join(directory, "config.txt"))
    learner = MetaLearner(cfg)
    merged = load_params(os.path.join(directory, "checkpoint"))
    learner.trainer.params = merged.prefixed("context")
    learner.trainer.key = merged.prefixed("context_key")
    learner.explorer.load_from(merged.prefixed("explorer"))
    learner.executor.load_from(merged.prefixed("executor"))
    learner.train_tasks = load_tasks(os.path.join(directory, "tasks_train.txt"))
    learner.test_tasks = load_tasks(os.path.join(directory, "tasks_test.txt"))
    learner.buffers = {
        t.task_id: TaskBuffers(t, alpha=cfg.alpha, capacity=cfg.buffer_capacity)
        for t in learner.train_tasks
    }
    return learner


def meta_train(cfg: RunConfig, log=None) -> dict:
    """Full training run: collect, update, log, checkpoint, final evaluation."""
    cfg.validate()
    learner = MetaLearner(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.out_dir, "metrics.jsonl")
    start = time.time()
    with open(metrics_path, "w") as fh:
        for i in range(cfg.iterations):
            pretraining = i < cfg.pretrain_iters
            record = {
                "iteration": i,
                "phase": "pretrain" if pretraining else "train",
            }
            record.update(learner.run_iteration())
            if (
                cfg.eval_every > 0
                and not pretraining
                and (i + 1) % cfg.eval_every == 0
            ):
                summary = evaluate(learner, learner.test_tasks, seed_key=cfg.seed)
                record["eval_mean_return"] = summary["mean_return"]
            record["wall_clock"] = time.time() - start
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            if log is not None:
                log(record)
    final = evaluate(learner, learner.test_tasks, seed_key=cfg.seed)
    save_checkpoint(learner, cfg.out_dir)
    with open(os.path.join(cfg.out_dir, "results.json"), "w") as fh:
        json.dump(final, fh, indent=2, sort_keys=True)
    return {"learner": learner, "final_eval": final, "metrics_path": metrics_path}
