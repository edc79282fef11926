"""Critic training: adaptive-moment gradient descent over the rated set.

The interactive flow incrementally trains the live critic for two epochs
after every new rating. retrain_from_scratch is the comparison mode that
rebuilds a model from a fresh initialization instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Critic, CriticArchitecture, DEFAULT_ARCHITECTURE, init_critic


@dataclass(frozen=True)
class TrainerConfig:
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 16
    epochs_per_increment: int = 2
    retrain_epochs: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def as_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "epochs_per_increment": self.epochs_per_increment,
            "retrain_epochs": self.retrain_epochs,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "adam_eps": self.adam_eps,
        }


@dataclass
class LabeledExample:
    """One rated loop: its MFCC features and the binary judgment."""

    features: np.ndarray
    label: int  # LIKE (1) or DISLIKE (0)
    loop_id: str


@dataclass
class OptimizerState:
    """Per-parameter Adam moments plus the step counter and settings."""

    settings: TrainerConfig
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @staticmethod
    def for_critic(critic: Critic, settings: TrainerConfig = TrainerConfig()) -> "OptimizerState":
        state = OptimizerState(settings=settings)
        for name, p in critic.named_parameters():
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        return state

    def apply(self, critic: Critic, grads: dict) -> None:
        cfg = self.settings
        self.step += 1
        bc1 = 1.0 - cfg.beta1 ** self.step
        bc2 = 1.0 - cfg.beta2 ** self.step
        for name, p in critic.named_parameters():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m[...] = cfg.beta1 * m + (1.0 - cfg.beta1) * g
            v[...] = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
            p[...] = p - cfg.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)


def _run_epochs(critic: Critic, opt: OptimizerState, dataset, epochs: int,
                rng: np.random.Generator):
    feats = np.stack([np.asarray(ex.features) for ex in dataset])
    labels = np.array([ex.label for ex in dataset], dtype=np.int64)
    n = len(dataset)
    batch = min(opt.settings.batch_size, n)
    losses = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = critic.loss_and_gradients(
                feats[idx], labels[idx], rng=rng, weight_decay=opt.settings.weight_decay
            )
            opt.apply(critic, grads)
            losses.append(loss)
    return losses


def train_increment(critic: Critic, opt: OptimizerState, dataset,
                    rng: np.random.Generator):
    """Two epochs (per settings) of Adam over the full rated set so far.

    Mutates and returns (critic, opt); the returned pair is the live state.
    """
    if not dataset:
        raise ValueError("train_increment requires a non-empty dataset")
    _run_epochs(critic, opt, dataset, opt.settings.epochs_per_increment, rng)
    return critic, opt


def retrain_from_scratch(dataset, rng: np.random.Generator,
                         arch: CriticArchitecture = DEFAULT_ARCHITECTURE,
                         settings: TrainerConfig = TrainerConfig(),
                         dtype=np.float32):
    """Fresh initialization trained for retrain_epochs; the comparison mode
    to incremental training. An empty dataset returns the untouched init."""
    critic = init_critic(rng, arch, dtype)
    opt = OptimizerState.for_critic(critic, settings)
    if dataset:
        _run_epochs(critic, opt, dataset, settings.retrain_epochs, rng)
    return critic, opt
