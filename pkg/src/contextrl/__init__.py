"""Meta-RL with a contrastive task encoder and information-gain exploration."""

__version__ = "0.1.0"
