"""Symbolic drum loops: grid patterns, instrument assignments, and the
perturbation kernel used by every search procedure.

The production space is a 4-track x 16-step boolean grid plus one sample
identifier per track. Reduced grids (e.g. 1x4) are accepted by the same
types so that kernel symmetry can be verified by exhaustive enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, RecordError

TRACKS = 4
STEPS = 16


def new_loop_id(rng: np.random.Generator) -> str:
    """Opaque UUID-style id drawn from the caller's random stream.

    Ids come from the session rng (not wall-clock entropy) so that a full
    session transcript is reproducible from its seed.
    """
    return rng.bytes(16).hex()


def _library_ids(library) -> Sequence[str]:
    ids = getattr(library, "ids", library)
    if len(ids) == 0:
        raise ConfigError("sample library is empty")
    return ids


@dataclass(frozen=True)
class DrumPattern:
    """Boolean hit grid, track-major: grid[track][step]."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=bool)
        if grid.ndim != 2 or grid.size == 0:
            raise ValueError(f"pattern grid must be a non-empty 2D matrix, got shape {grid.shape}")
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)

    @classmethod
    def _adopt(cls, grid: np.ndarray) -> "DrumPattern":
        """Wrap a freshly-allocated bool grid without copying (internal)."""
        self = object.__new__(cls)
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        return self

    @property
    def tracks(self) -> int:
        return self.grid.shape[0]

    @property
    def steps(self) -> int:
        return self.grid.shape[1]

    @property
    def hit_count(self) -> int:
        return int(self.grid.sum())

    def is_standard(self) -> bool:
        return self.grid.shape == (TRACKS, STEPS)

    def __eq__(self, other):
        if not isinstance(other, DrumPattern):
            return NotImplemented
        return self.grid.shape == other.grid.shape and bool(np.array_equal(self.grid, other.grid))

    def __hash__(self):
        return hash((self.grid.shape, self.grid.tobytes()))


@dataclass(frozen=True)
class InstrumentAssignment:
    """One sample identifier per grid track."""

    samples: tuple

    def __post_init__(self):
        samples = tuple(str(s) for s in self.samples)
        if len(samples) == 0:
            raise ValueError("instrument assignment must not be empty")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


@dataclass(frozen=True)
class DrumLoop:
    """A pattern plus its instruments. Equality is content equality; the id
    only distinguishes occurrences within a session."""

    pattern: DrumPattern
    instruments: InstrumentAssignment
    id: str

    def __post_init__(self):
        if len(self.instruments) != self.pattern.tracks:
            raise ValueError(
                f"instrument count {len(self.instruments)} does not match "
                f"{self.pattern.tracks} pattern tracks"
            )

    def __eq__(self, other):
        if not isinstance(other, DrumLoop):
            return NotImplemented
        return self.pattern == other.pattern and self.instruments.samples == other.instruments.samples

    def __hash__(self):
        return hash((self.pattern, self.instruments.samples))

    def content_key(self) -> bytes:
        """Stable digest of (pattern, instruments), ignoring id."""
        return self.pattern.grid.tobytes() + "|".join(self.instruments.samples).encode()


@dataclass(frozen=True)
class PerturbParams:
    """Independent per-cell flip and per-track instrument redraw probabilities."""

    cell_flip_prob: float = 0.05
    instrument_redraw_prob: float = 0.1

    def __post_init__(self):
        for name in ("cell_flip_prob", "instrument_redraw_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {p}")


def random_loop(library, rng: np.random.Generator, tracks: int = TRACKS,
                steps: int = STEPS) -> DrumLoop:
    """Random loop with density-uniform hit placement.

    The hit count is drawn uniformly over 0..cells and the hits are placed
    uniformly at random, so generated loops span the whole density range
    (mean cell density stays 0.5). A per-cell fair coin would concentrate
    essentially every draw near half-full grids, leaving sparse and busy
    rhythms unreachable to the downstream search. Instruments are uniform
    with replacement over the library.
    """
    ids = _library_ids(library)
    cells = tracks * steps
    k = int(rng.integers(0, cells + 1))
    flat = np.zeros(cells, dtype=bool)
    if k:
        flat[rng.choice(cells, size=k, replace=False)] = True
    grid = flat.reshape(tracks, steps)
    samples = tuple(ids[int(i)] for i in rng.integers(0, len(ids), size=tracks))
    return DrumLoop(DrumPattern(grid), InstrumentAssignment(samples), new_loop_id(rng))


def perturb(loop: DrumLoop, params: PerturbParams, rng: np.random.Generator, library) -> DrumLoop:
    """Symmetric proposal kernel: flips each cell with cell_flip_prob and
    redraws each track's instrument (current sample included) with
    instrument_redraw_prob, so q(x'|x) = q(x|x').
    """
    ids = _library_ids(library)
    flips = rng.random(loop.pattern.grid.shape) < params.cell_flip_prob
    grid = loop.pattern.grid ^ flips
    instruments = loop.instruments
    if params.instrument_redraw_prob > 0:
        samples = list(instruments.samples)
        changed = False
        for t in range(len(samples)):
            if rng.random() < params.instrument_redraw_prob:
                samples[t] = ids[int(rng.integers(0, len(ids)))]
                changed = True
        if changed:
            instruments = InstrumentAssignment(tuple(samples))
    return DrumLoop(DrumPattern._adopt(grid), instruments, new_loop_id(rng))


def loop_to_record(loop: DrumLoop) -> dict:
    """Portable dictionary form: {"id", "grid" (4x16 bools), "samples" (4 ids)}."""
    return {
        "id": loop.id,
        "grid": [[bool(c) for c in row] for row in loop.pattern.grid],
        "samples": list(loop.instruments.samples),
    }


def record_to_loop(record: dict) -> DrumLoop:
    """Inverse of loop_to_record. Raises RecordError naming the bad field."""
    if not isinstance(record, dict):
        raise RecordError("loop record must be an object")
    for key in ("id", "grid", "samples"):
        if key not in record:
            raise RecordError(f"loop record missing field '{key}'")
    if not isinstance(record["id"], str) or not record["id"]:
        raise RecordError("field 'id' must be a non-empty string")
    grid = record["grid"]
    if (
        not isinstance(grid, list)
        or len(grid) != TRACKS
        or any(not isinstance(row, list) or len(row) != STEPS for row in grid)
    ):
        raise RecordError(f"field 'grid' must be a {TRACKS}x{STEPS} matrix")
    for row in grid:
        for cell in row:
            if not isinstance(cell, bool):
                raise RecordError("field 'grid' must contain only booleans")
    samples = record["samples"]
    if not isinstance(samples, list) or len(samples) != TRACKS:
        raise RecordError(f"field 'samples' must list exactly {TRACKS} sample ids")
    if any(not isinstance(s, str) for s in samples):
        raise RecordError("field 'samples' must contain only strings")
    return DrumLoop(
        DrumPattern(np.array(grid, dtype=bool)),
        InstrumentAssignment(tuple(samples)),
        record["id"],
    )
