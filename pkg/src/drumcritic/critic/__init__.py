"""User-specific preference critic: architecture, training, persistence."""

from .network import (
    Critic,
    CriticArchitecture,
    DEFAULT_ARCHITECTURE,
    DISLIKE,
    LIKE,
    init_critic,
)
from .training import (
    LabeledExample,
    OptimizerState,
    TrainerConfig,
    retrain_from_scratch,
    train_increment,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Critic",
    "CriticArchitecture",
    "DEFAULT_ARCHITECTURE",
    "DISLIKE",
    "LIKE",
    "LabeledExample",
    "OptimizerState",
    "TrainerConfig",
    "init_critic",
    "load_checkpoint",
    "retrain_from_scratch",
    "save_checkpoint",
    "train_increment",
]
