"""Automated raters that stand in for the human, and the harness that runs
the complete interactive protocol against one.

Proxies judge the symbolic loop (hit counts, sample choices); they see and
influence nothing except through their ratings, so a simulation exercises
exactly the code paths a human session does.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import SampleLibrary
from .errors import ConfigError
from .patterns import DrumLoop
from .session import (
    ExperimentResult,
    PHASE_COMPLETE,
    PHASE_GENERATING,
    Session,
    SessionConfig,
    create_session,
)


@dataclass(frozen=True)
class ProxyRater:
    """Deterministic or stochastic rating rule: DrumLoop -> like-probability."""

    name: str

    def like_probability(self, loop: DrumLoop) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class AlwaysLike(ProxyRater):
    name: str = "always_like"

    def like_probability(self, loop: DrumLoop) -> float:
        return 1.0


@dataclass(frozen=True)
class AlwaysDislike(ProxyRater):
    name: str = "always_dislike"

    def like_probability(self, loop: DrumLoop) -> float:
        return 0.0


@dataclass(frozen=True)
class DensityRule(ProxyRater):
    """Likes a loop iff its total hit count lies in [min_hits, max_hits] and
    no blacklisted sample is assigned to any track."""

    min_hits: int = 4
    max_hits: int = 12
    blacklist: frozenset = frozenset()
    name: str = "density"

    def like_probability(self, loop: DrumLoop) -> float:
        hits = loop.pattern.hit_count
        if not (self.min_hits <= hits <= self.max_hits):
            return 0.0
        if any(s in self.blacklist for s in loop.instruments.samples):
            return 0.0
        return 1.0


def make_proxy(name: str, min_hits: int = 4, max_hits: int = 12, blacklist=()) -> ProxyRater:
    if name == "always_like":
        return AlwaysLike()
    if name == "always_dislike":
        return AlwaysDislike()
    if name == "density":
        return DensityRule(min_hits=min_hits, max_hits=max_hits, blacklist=frozenset(blacklist))
    raise ConfigError(f"unknown proxy {name!r}; expected always_like, always_dislike, or density")


def simulate_session(proxy: ProxyRater, config: SessionConfig, seed: int,
                     library: SampleLibrary, progress=None) -> Session:
    """Run the full 80+60 protocol with the proxy answering every rating."""
    session = create_session(config, seed, library)
    proxy_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E3779B9]))
    total = config.phase1_ratings + config.phase2_ratings
    done = 0
    while session.phase != PHASE_COMPLETE:
        if session.phase == PHASE_GENERATING:
            session.build_phase2_queue()
            continue
        loop_id, _audio = session.next_loop()
        p_like = proxy.like_probability(session.loop_by_id(loop_id).loop)
        rating = "like" if proxy_rng.random() < p_like else "dislike"
        session.submit_rating(loop_id, rating)
        done += 1
        if progress is not None:
            progress(done, total)
    return session


def run_simulation(proxy: ProxyRater, config: SessionConfig, seed: int,
                   library: SampleLibrary) -> ExperimentResult:
    return simulate_session(proxy, config, seed, library).compute_results()


def summarize_results(results) -> dict:
    """Aggregate per-seed outcomes the way the study reports them."""
    deltas = np.array([r.delta_theta for r in results], dtype=float)
    return {
        "seeds": len(results),
        "mean_theta_init": float(np.mean([r.theta_init for r in results])),
        "mean_theta_final": float(np.mean([r.theta_final for r in results])),
        "mean_delta_theta": float(deltas.mean()),
        "median_delta_theta": float(np.median(deltas)),
        "fraction_improved": float(np.mean(deltas > 0)),
        "fraction_improved_0p2": float(np.mean(deltas >= 0.2)),
    }
