"""Training orchestration, evaluation, ablations, verification, CLI."""

from .ablate import BONUS_SCALES, PRESETS, ablate
from .checks import CheckResult, format_results, self_check
from .config import (
    RunConfig,
    apply_overrides,
    config_to_text,
    load_config,
    parse_config_text,
    save_config,
)
from .loops import (
    MetaLearner,
    collect_embedding_batches,
    encoder_row,
    evaluate,
    load_learner,
    meta_test,
    meta_train,
    save_checkpoint,
)

__all__ = [
    "BONUS_SCALES",
    "PRESETS",
    "ablate",
    "CheckResult",
    "format_results",
    "self_check",
    "RunConfig",
    "apply_overrides",
    "config_to_text",
    "load_config",
    "parse_config_text",
    "save_config",
    "MetaLearner",
    "collect_embedding_batches",
    "encoder_row",
    "evaluate",
    "load_learner",
    "meta_test",
    "meta_train",
    "save_checkpoint",
]
