"""The two-phase rating protocol as a per-user state machine.

Phase I: 80 loops, each drawn against the most recent critic, with one
incremental training step after every rating. At the boundary the final
critic is checkpointed and a blind queue of 60 Phase II loops is built,
half from the initial checkpoint and half from the final one, shuffled.
Phase II: 60 ratings recorded for evaluation only; parameters stay frozen.

Sessions are deterministic given (seed, config, library): loop ids, scores
and queue order all derive from one seeded random stream, which is also
persisted so a reloaded session continues the same stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .audio import SampleLibrary, Waveform, encode_wav, render_bar, render_presentation
from .critic import (
    Critic,
    LabeledExample,
    OptimizerState,
    TrainerConfig,
    init_critic,
    load_checkpoint,
    save_checkpoint,
    train_increment,
)
from .critic.network import LIKE, DISLIKE
from .errors import RecordError, SequencingError, SessionStateError
from .features import MfccSettings, compute_mfcc
from .patterns import DrumLoop, loop_to_record, record_to_loop
from .sampler import CriticScorer, SamplerConfig, sample_phase1, sample_phase2

PHASE_I = "I"
PHASE_GENERATING = "generating"
PHASE_II = "II"
PHASE_COMPLETE = "complete"

SOURCE_CURRENT = "current"
SOURCE_INITIAL = "initial"
SOURCE_FINAL = "final"


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class SessionConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    mfcc: MfccSettings = field(default_factory=MfccSettings)
    phase1_ratings: int = 80
    phase2_per_model: int = 30

    def __post_init__(self):
        if self.phase1_ratings < 1 or self.phase2_per_model < 1:
            raise ValueError("phase lengths must be >= 1")

    @property
    def phase2_ratings(self) -> int:
        return 2 * self.phase2_per_model


@dataclass
class RatingRecord:
    loop_id: str
    phase: str            # "I" | "II"
    source_model: str     # "current" | "initial" | "final"
    rating: str           # "like" | "dislike"
    presented_at: str
    rated_at: str

    def as_dict(self) -> dict:
        return {
            "loop_id": self.loop_id,
            "phase": self.phase,
            "source_model": self.source_model,
            "rating": self.rating,
            "presented_at": self.presented_at,
            "rated_at": self.rated_at,
        }


@dataclass
class LoopEntry:
    """Server-side record of one generated loop (source tags never leave it)."""

    loop: DrumLoop
    phase: str
    source_model: str
    score: float
    fallback: bool = False
    rated: bool = False


@dataclass(frozen=True)
class ExperimentResult:
    theta_init: float
    theta_final: float
    delta_theta: float

    def as_dict(self) -> dict:
        return {
            "theta_init": self.theta_init,
            "theta_final": self.theta_final,
            "delta_theta": self.delta_theta,
        }


@dataclass
class PendingLoop:
    loop_id: str
    phase: str
    presented_at: str


class Session:
    """One user's experiment. Calls must be externally serialized."""

    def __init__(self, config: SessionConfig, seed: int, library: SampleLibrary):
        self.config = config
        self.seed = int(seed)
        self.library = library
        self.id = f"sess-{np.random.default_rng(self.seed).bytes(8).hex()}"
        self.rng = np.random.default_rng(self.seed)
        self.phase = PHASE_I
        self.ratings: list[RatingRecord] = []
        self.dataset: list[LabeledExample] = []
        self.loops: dict[str, LoopEntry] = {}
        self.loop_order: list[str] = []
        self.queue: list[str] = []          # loop ids in presentation order
        self.queue_pos = 0
        self.pending: PendingLoop | None = None
        self.created_at = _utcnow()
        self.critic = init_critic(self.rng)
        self.optimizer = OptimizerState.for_critic(self.critic, config.trainer)
        self.initial_checkpoint = save_checkpoint(self.critic)
        self.final_checkpoint: bytes | None = None
        self._scorer: CriticScorer | None = None

    # --- helpers ---

    def _live_scorer(self) -> CriticScorer:
        if self._scorer is None:
            self._scorer = CriticScorer(self.critic, self.library, self.config.mfcc)
        return self._scorer

    def _phase1_count(self) -> int:
        return sum(1 for r in self.ratings if r.phase == PHASE_I)

    def _phase2_count(self) -> int:
        return sum(1 for r in self.ratings if r.phase == PHASE_II)

    def counts(self) -> dict:
        return {
            "phase": self.phase,
            "phase1_rated": self._phase1_count(),
            "phase1_total": self.config.phase1_ratings,
            "phase2_rated": self._phase2_count(),
            "phase2_total": self.config.phase2_ratings,
        }

    def loop_by_id(self, loop_id: str) -> LoopEntry:
        try:
            return self.loops[loop_id]
        except KeyError:
            raise SequencingError(f"unknown loop id {loop_id!r}") from None

    # --- protocol surface ---

    def next_loop(self) -> tuple[str, Waveform]:
        """Generate or dequeue the next loop to rate; returns its id and the
        9 s presentation render. Fails if a rating is already pending."""
        if self.pending is not None:
            raise SequencingError(f"loop {self.pending.loop_id!r} is awaiting a rating")
        if self.phase == PHASE_GENERATING:
            raise SessionStateError("phase II queue is being generated")
        if self.phase == PHASE_COMPLETE:
            raise SessionStateError("session is complete")
        if self.phase == PHASE_I:
            scored = sample_phase1(self._live_scorer(), self.config.sampler, self.library, self.rng)
            entry = LoopEntry(scored.loop, PHASE_I, SOURCE_CURRENT, scored.score)
            self.loops[scored.loop.id] = entry
            self.loop_order.append(scored.loop.id)
        else:  # PHASE_II
            entry = self.loops[self.queue[self.queue_pos]]
            self.queue_pos += 1
        self.pending = PendingLoop(entry.loop.id, entry.phase, _utcnow())
        return entry.loop.id, self.presentation_audio(entry.loop.id)

    def presentation_audio(self, loop_id: str) -> Waveform:
        return render_presentation(self.loop_by_id(loop_id).loop, self.library)

    def submit_rating(self, loop_id: str, rating: str) -> dict:
        """Record a like/dislike for the pending loop; in Phase I this also
        trains the live critic before the next loop can be drawn."""
        if rating not in ("like", "dislike"):
            raise ValueError(f"rating must be 'like' or 'dislike', got {rating!r}")
        if self.pending is None:
            raise SequencingError("no loop is awaiting a rating")
        if self.pending.loop_id != loop_id:
            raise SequencingError(
                f"rating for {loop_id!r} does not match pending loop {self.pending.loop_id!r}"
            )
        entry = self.loops[loop_id]
        record = RatingRecord(
            loop_id=loop_id,
            phase=entry.phase,
            source_model=entry.source_model,
            rating=rating,
            presented_at=self.pending.presented_at,
            rated_at=_utcnow(),
        )
        self.ratings.append(record)
        entry.rated = True
        self.pending = None
        if entry.phase == PHASE_I:
            feats = compute_mfcc(render_bar(entry.loop, self.library), self.config.mfcc)
            label = LIKE if rating == "like" else DISLIKE
            self.dataset.append(LabeledExample(feats.values, label, loop_id))
            train_increment(self.critic, self.optimizer, self.dataset, self.rng)
            self._scorer = None  # parameters changed; stale score cache
            if self._phase1_count() >= self.config.phase1_ratings:
                self.final_checkpoint = save_checkpoint(self.critic)
                self.phase = PHASE_GENERATING
        else:
            if self._phase2_count() >= self.config.phase2_ratings:
                self.phase = PHASE_COMPLETE
        return self.counts()

    def generate_phase2_entries(self) -> list:
        """Slow half of the phase boundary: sample phase2_per_model loops
        from each frozen checkpoint and shuffle them, without touching the
        visible session state."""
        if self.phase != PHASE_GENERATING:
            raise SessionStateError(f"cannot build phase II queue in phase {self.phase!r}")
        entries = []
        for source, checkpoint in (
            (SOURCE_INITIAL, self.initial_checkpoint),
            (SOURCE_FINAL, self.final_checkpoint),
        ):
            scorer = CriticScorer(load_checkpoint(checkpoint), self.library, self.config.mfcc)
            for _ in range(self.config.phase2_per_model):
                result = sample_phase2(scorer, self.config.sampler, self.library, self.rng)
                entries.append(
                    LoopEntry(result.scored.loop, PHASE_II, source, result.scored.score,
                              fallback=result.fallback)
                )
        order = self.rng.permutation(len(entries))
        return [entries[int(i)] for i in order]

    def install_phase2_queue(self, entries: list) -> None:
        """Fast half: publish the generated queue and enter Phase II."""
        if self.phase != PHASE_GENERATING:
            raise SessionStateError(f"cannot install phase II queue in phase {self.phase!r}")
        self.queue = []
        for entry in entries:
            self.loops[entry.loop.id] = entry
            self.loop_order.append(entry.loop.id)
            self.queue.append(entry.loop.id)
        self.queue_pos = 0
        self.phase = PHASE_II

    def build_phase2_queue(self) -> None:
        """Generate and install the blind evaluation queue in one call."""
        self.install_phase2_queue(self.generate_phase2_entries())

    def compute_results(self) -> ExperimentResult:
        if self.phase != PHASE_COMPLETE:
            raise SessionStateError("results are defined only for a complete session")
        likes = {SOURCE_INITIAL: 0, SOURCE_FINAL: 0}
        for r in self.ratings:
            if r.phase == PHASE_II and r.rating == "like":
                likes[r.source_model] += 1
        n = self.config.phase2_per_model
        theta_init = likes[SOURCE_INITIAL] / n
        theta_final = likes[SOURCE_FINAL] / n
        return ExperimentResult(theta_init, theta_final, theta_final - theta_init)


def create_session(config: SessionConfig, seed: int, library: SampleLibrary) -> Session:
    return Session(config, seed, library)


def ensemble_rank(critics, loops, library: SampleLibrary,
                  settings: MfccSettings = MfccSettings()):
    """Order loops by the mean eval score over all given critics, best first.
    Ties break by loop id so the ranking is deterministic."""
    if not critics or not loops:
        raise ValueError("ensemble_rank needs at least one critic and one loop")
    scorers = [CriticScorer(c, library, settings) for c in critics]
    ranked = []
    for loop in loops:
        mean = float(np.mean([scorer(loop) for scorer in scorers]))
        ranked.append((loop, mean))
    ranked.sort(key=lambda pair: (-pair[1], pair[0].id))
    return ranked


# --- persistence ---

def persist_session(session: Session, directory) -> None:
    """Write ratings, loop records, bar-render WAVs, checkpoints, and the
    resumable machine state into a session directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ratings = {
        "session": session.id,
        "seed": session.seed,
        "ratings": [r.as_dict() for r in session.ratings],
    }
    (directory / "ratings.json").write_text(json.dumps(ratings, indent=1))
    loops = [loop_to_record(session.loops[lid].loop) for lid in session.loop_order]
    (directory / "loops.json").write_text(json.dumps(loops))
    meta = {
        lid: {
            "phase": session.loops[lid].phase,
            "source_model": session.loops[lid].source_model,
            "score": session.loops[lid].score,
            "fallback": session.loops[lid].fallback,
            "rated": session.loops[lid].rated,
        }
        for lid in session.loop_order
    }
    state = {
        "session": session.id,
        "seed": session.seed,
        "created_at": session.created_at,
        "phase": session.phase,
        "config": _config_to_dict(session.config),
        "rng_state": _rng_state_to_jsonable(session.rng.bit_generator.state),
        "pending": (
            {
                "loop_id": session.pending.loop_id,
                "phase": session.pending.phase,
                "presented_at": session.pending.presented_at,
            }
            if session.pending
            else None
        ),
        "queue": session.queue,
        "queue_pos": session.queue_pos,
        "loop_order": session.loop_order,
        "loop_meta": meta,
    }
    (directory / "session.json").write_text(json.dumps(state, indent=1))
    (directory / "critic_initial.ckpt").write_bytes(session.initial_checkpoint)
    if session.final_checkpoint is not None:
        (directory / "critic_final.ckpt").write_bytes(session.final_checkpoint)
    (directory / "critic_live.ckpt").write_bytes(save_checkpoint(session.critic))
    opt = session.optimizer
    moments = {}
    for name in opt.m:
        moments[f"m::{name}"] = opt.m[name]
        moments[f"v::{name}"] = opt.v[name]
    np.savez(directory / "optimizer.npz", step=np.int64(opt.step), **moments)
    audio_dir = directory / "audio"
    audio_dir.mkdir(exist_ok=True)
    for lid in session.loop_order:
        path = audio_dir / f"{lid}.wav"
        if not path.exists():
            path.write_bytes(encode_wav(render_bar(session.loops[lid].loop, session.library)))


def load_session(directory, library: SampleLibrary) -> Session:
    """Rebuild a session whose subsequent behavior matches the persisted one."""
    directory = Path(directory)
    try:
        state = json.loads((directory / "session.json").read_text())
        ratings = json.loads((directory / "ratings.json").read_text())
        loops = json.loads((directory / "loops.json").read_text())
    except FileNotFoundError as exc:
        raise RecordError(f"session directory is missing {Path(exc.filename).name}") from exc
    except json.JSONDecodeError as exc:
        raise RecordError(f"corrupt session file in {directory}: {exc}") from exc

    config = _config_from_dict(state["config"])
    session = Session.__new__(Session)
    session.config = config
    session.seed = int(state["seed"])
    session.library = library
    session.id = state["session"]
    session.rng = np.random.default_rng(session.seed)
    session.rng.bit_generator.state = _rng_state_from_jsonable(state["rng_state"])
    session.phase = state["phase"]
    session.created_at = state["created_at"]
    session.queue = list(state["queue"])
    session.queue_pos = int(state["queue_pos"])
    session.loop_order = list(state["loop_order"])
    session.loops = {}
    meta = state["loop_meta"]
    for record in loops:
        loop = record_to_loop(record)
        m = meta.get(loop.id)
        if m is None:
            raise RecordError(f"loop {loop.id} has no metadata in session.json")
        session.loops[loop.id] = LoopEntry(
            loop, m["phase"], m["source_model"], float(m["score"]),
            fallback=bool(m["fallback"]), rated=bool(m["rated"]),
        )
    session.ratings = [RatingRecord(**r) for r in ratings["ratings"]]
    session.pending = PendingLoop(**state["pending"]) if state["pending"] else None
    session.initial_checkpoint = (directory / "critic_initial.ckpt").read_bytes()
    final_path = directory / "critic_final.ckpt"
    session.final_checkpoint = final_path.read_bytes() if final_path.exists() else None
    session.critic = load_checkpoint((directory / "critic_live.ckpt").read_bytes())
    session.optimizer = OptimizerState.for_critic(session.critic, config.trainer)
    with np.load(directory / "optimizer.npz") as blob:
        session.optimizer.step = int(blob["step"])
        for name in session.optimizer.m:
            session.optimizer.m[name][...] = blob[f"m::{name}"]
            session.optimizer.v[name][...] = blob[f"v::{name}"]
    session.dataset = []
    for r in session.ratings:
        if r.phase != PHASE_I:
            continue
        entry = session.loops[r.loop_id]
        feats = compute_mfcc(render_bar(entry.loop, library), config.mfcc)
        label = LIKE if r.rating == "like" else DISLIKE
        session.dataset.append(LabeledExample(feats.values, label, r.loop_id))
    session._scorer = None
    return session


def _config_to_dict(config: SessionConfig) -> dict:
    return {
        "sampler": config.sampler.as_dict(),
        "trainer": config.trainer.as_dict(),
        "mfcc": config.mfcc.as_dict(),
        "phase1_ratings": config.phase1_ratings,
        "phase2_per_model": config.phase2_per_model,
    }


def _config_from_dict(d: dict) -> SessionConfig:
    from .patterns import PerturbParams

    s = dict(d["sampler"])
    perturbation = PerturbParams(s.pop("cell_flip_prob"), s.pop("instrument_redraw_prob"))
    return SessionConfig(
        sampler=SamplerConfig(perturbation=perturbation, **s),
        trainer=TrainerConfig(**d["trainer"]),
        mfcc=MfccSettings(**d["mfcc"]),
        phase1_ratings=int(d["phase1_ratings"]),
        phase2_per_model=int(d["phase2_per_model"]),
    )


def _rng_state_to_jsonable(state):
    if isinstance(state, dict):
        return {k: _rng_state_to_jsonable(v) for k, v in state.items()}
    if isinstance(state, np.integer):
        return int(state)
    if isinstance(state, np.ndarray):
        return {"__ndarray__": state.tolist(), "dtype": str(state.dtype)}
    return state


def _rng_state_from_jsonable(state):
    if isinstance(state, dict):
        if "__ndarray__" in state:
            return np.array(state["__ndarray__"], dtype=state["dtype"])
        return {k: _rng_state_from_jsonable(v) for k, v in state.items()}
    return state
