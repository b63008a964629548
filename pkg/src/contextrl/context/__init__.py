"""Task-belief encoding and its training objectives."""

from .encoder import (
    LOGVAR_MAX,
    LOGVAR_MIN,
    Belief,
    EncoderSpec,
    encode,
    encode_batch,
    encode_nodes,
    encoder_inputs,
    export_embeddings,
    init_encoder,
    kl_to_standard_nodes,
    prior_belief,
    product_of_gaussians,
)
from .training import (
    MODES,
    EncoderTrainer,
    contrastive_loss,
    contrastive_loss_nodes,
    similarity_matrix,
)

__all__ = [
    "LOGVAR_MAX",
    "LOGVAR_MIN",
    "Belief",
    "EncoderSpec",
    "encode",
    "encode_batch",
    "encode_nodes",
    "encoder_inputs",
    "export_embeddings",
    "init_encoder",
    "kl_to_standard_nodes",
    "prior_belief",
    "product_of_gaussians",
    "MODES",
    "EncoderTrainer",
    "contrastive_loss",
    "contrastive_loss_nodes",
    "similarity_matrix",
]
