"""Ablation presets: small grids over the knobs that matter.

Each preset trains (or reuses) runs under the base output directory and
writes a summary JSON mapping variant names to final evaluation returns.
"""

from __future__ import annotations

import dataclasses
import json
import os

from ..errors import ConfigurationError
from ..context.training import MODES
from .config import RunConfig
from .loops import evaluate, meta_train

PRESETS = ("alpha_sweep", "update_frequency", "no_regularizer", "encoder_modes")

BONUS_SCALES = (0.1, 1.0, 10.0)


def _train_variant(base: RunConfig, name: str, **changes) -> dict:
    cfg = dataclasses.replace(
        base, out_dir=os.path.join(base.out_dir, name), **changes
    )
    out = meta_train(cfg)
    return {
        "mean_return": out["final_eval"]["mean_return"],
        "std_return": out["final_eval"]["std_return"],
        "out_dir": cfg.out_dir,
    }


def ablate(preset: str, base: RunConfig) -> dict:
    """Run one preset and return its summary (also written to disk)."""
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown ablation preset {preset!r}; have {PRESETS}")
    base.validate()
    os.makedirs(base.out_dir, exist_ok=True)
    variants: dict[str, dict] = {}

    if preset == "alpha_sweep":
        for alpha in BONUS_SCALES:
            variants[f"alpha_{alpha:g}"] = _train_variant(
                base, f"alpha_{alpha:g}", alpha=alpha
            )

    elif preset == "update_frequency":
        # One trained model, two test-time context refresh schedules.
        out = meta_train(
            dataclasses.replace(base, out_dir=os.path.join(base.out_dir, "trained"))
        )
        learner = out["learner"]
        for update in ("step", "episode"):
            summary = evaluate(
                learner, learner.test_tasks, seed_key=base.seed, context_update=update
            )
            variants[f"update_{update}"] = {
                "mean_return": summary["mean_return"],
                "std_return": summary["std_return"],
                "out_dir": os.path.join(base.out_dir, "trained"),
            }

    elif preset == "no_regularizer":
        variants["regularized"] = _train_variant(base, "regularized", regularizer=True)
        variants["no_regularizer"] = _train_variant(
            base, "no_regularizer", regularizer=False
        )

    elif preset == "encoder_modes":
        for mode in MODES:
            name = f"mode_{mode.replace('+', '_')}"
            variants[name] = _train_variant(base, name, encoder_mode=mode)

    summary = {"preset": preset, "seed": base.seed, "variants": variants}
    with open(os.path.join(base.out_dir, f"ablation_{preset}.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
