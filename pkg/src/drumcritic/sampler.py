"""Search over loop space against a fixed critic.

Metropolis-Hastings with a symmetric perturbation proposal and an optional
temperature on the acceptance ratio, plus greedy hill climbing. Chains are
deterministic given (seed, critic snapshot, config), and each step costs
exactly one render + MFCC + forward because states carry their scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .audio import SampleLibrary, render_bar
from .critic import Critic
from .errors import ConfigError
from .features import MfccSettings, compute_mfcc
from .patterns import DrumLoop, PerturbParams, perturb, random_loop

SCORE_FLOOR = 1e-6  # keeps acceptance ratios finite when softmax underflows

Scorer = Callable[[DrumLoop], float]


@dataclass(frozen=True)
class SamplerConfig:
    burn_in_steps: int = 200
    temperature: float = 1.0
    phase2_threshold: float = 0.95
    phase2_max_steps: int = 5000
    phase2_max_restarts: int = 5
    perturbation: PerturbParams = field(default_factory=PerturbParams)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if not (0 < self.phase2_threshold < 1):
            raise ConfigError(f"phase2_threshold must be in (0,1), got {self.phase2_threshold}")
        if self.burn_in_steps < 0:
            raise ConfigError("burn_in_steps must be >= 0")
        if self.phase2_max_steps < 1 or self.phase2_max_restarts < 1:
            raise ConfigError("phase2 step and restart caps must be >= 1")

    def as_dict(self) -> dict:
        return {
            "burn_in_steps": self.burn_in_steps,
            "temperature": self.temperature,
            "phase2_threshold": self.phase2_threshold,
            "phase2_max_steps": self.phase2_max_steps,
            "phase2_max_restarts": self.phase2_max_restarts,
            "cell_flip_prob": self.perturbation.cell_flip_prob,
            "instrument_redraw_prob": self.perturbation.instrument_redraw_prob,
        }


@dataclass(frozen=True)
class ScoredLoop:
    loop: DrumLoop
    score: float


class Phase2Result(NamedTuple):
    scored: ScoredLoop
    fallback: bool  # True when no state reached the threshold and the best seen is returned


class CriticScorer:
    """Callable DrumLoop -> like-probability: render_bar -> MFCC -> eval forward.

    Scores are memoized by loop content (loops with equal pattern and
    instruments always score identically), which makes rejected and identity
    proposals in a chain nearly free. The cache assumes the critic snapshot
    is immutable; call invalidate() after any parameter update.
    """

    _MAX_CACHE = 200_000

    def __init__(self, critic: Critic, library: SampleLibrary,
                 settings: MfccSettings = MfccSettings()):
        self.critic = critic
        self.library = library
        self.settings = settings
        self._cache: dict = {}

    def invalidate(self) -> None:
        self._cache.clear()

    def __call__(self, loop: DrumLoop) -> float:
        key = loop.content_key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        feats = compute_mfcc(render_bar(loop, self.library), self.settings)
        value = float(self.critic.forward(feats.values, mode="eval"))
        if len(self._cache) < self._MAX_CACHE:
            self._cache[key] = value
        return value


def score(critic: Critic, loop: DrumLoop, library: SampleLibrary,
          settings: MfccSettings = MfccSettings()) -> float:
    return CriticScorer(critic, library, settings)(loop)


def mh_step(current: ScoredLoop, scorer: Scorer, cfg: SamplerConfig,
            rng: np.random.Generator, library: SampleLibrary) -> ScoredLoop:
    """One Metropolis-Hastings transition: propose a perturbation, accept
    with probability min(1, (f(x')/f(x)) ** (1/temperature))."""
    proposal = perturb(current.loop, cfg.perturbation, rng, library)
    proposal_score = scorer(proposal)
    ratio = max(proposal_score, SCORE_FLOOR) / max(current.score, SCORE_FLOOR)
    if ratio >= 1.0 or rng.random() < ratio ** (1.0 / cfg.temperature):
        return ScoredLoop(proposal, proposal_score)
    return current


def sample_phase1(scorer: Scorer, cfg: SamplerConfig, library: SampleLibrary,
                  rng: np.random.Generator) -> ScoredLoop:
    """Draw approximately proportional to the critic score: a random start
    followed by burn_in_steps MH transitions; the final state is the sample."""
    loop = random_loop(library, rng)
    state = ScoredLoop(loop, scorer(loop))
    for _ in range(cfg.burn_in_steps):
        state = mh_step(state, scorer, cfg, rng, library)
    return state


def sample_phase2(scorer: Scorer, cfg: SamplerConfig, library: SampleLibrary,
                  rng: np.random.Generator) -> Phase2Result:
    """Keep the chain running until a state clears the score threshold.

    Each chain gets phase2_max_steps transitions; an exhausted chain restarts
    from a fresh random loop. After phase2_max_restarts exhausted chains the
    best state seen is returned, flagged as a below-threshold fallback.
    """
    best = None
    for _ in range(cfg.phase2_max_restarts):
        loop = random_loop(library, rng)
        state = ScoredLoop(loop, scorer(loop))
        if best is None or state.score > best.score:
            best = state
        if state.score >= cfg.phase2_threshold:
            return Phase2Result(state, False)
        for _ in range(cfg.phase2_max_steps):
            state = mh_step(state, scorer, cfg, rng, library)
            if state.score > best.score:
                best = state
            if state.score >= cfg.phase2_threshold:
                return Phase2Result(state, False)
    return Phase2Result(best, True)


def hill_climb(scorer: Scorer, init: DrumLoop, iterations: int, cfg: SamplerConfig,
               rng: np.random.Generator, library: SampleLibrary) -> ScoredLoop:
    """Greedy ascent: perturbation proposals are accepted only on a strict
    score improvement, so the trajectory is non-decreasing."""
    if iterations < 1:
        raise ConfigError("hill_climb needs at least one iteration")
    state = ScoredLoop(init, scorer(init))
    for _ in range(iterations):
        proposal = perturb(state.loop, cfg.perturbation, rng, library)
        proposal_score = scorer(proposal)
        if proposal_score > state.score:
            state = ScoredLoop(proposal, proposal_score)
    return state
