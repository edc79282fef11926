"""Reduced 1-track x 4-step loop space (16 states) used to verify sampler
behavior against brute-force enumeration."""

import numpy as np

from drumcritic.audio import SampleLibrary, Waveform
from drumcritic.patterns import DrumLoop, DrumPattern, InstrumentAssignment, PerturbParams

N_CELLS = 4


def toy_library():
    return SampleLibrary({"only": Waveform(np.array([1.0]))})


def state_to_loop(state: int, loop_id: str = "toy") -> DrumLoop:
    bits = [(state >> i) & 1 == 1 for i in range(N_CELLS)]
    return DrumLoop(DrumPattern(np.array([bits])), InstrumentAssignment(("only",)), loop_id)


def loop_to_state(loop: DrumLoop) -> int:
    cells = loop.pattern.grid[0]
    return int(sum(1 << i for i in range(N_CELLS) if cells[i]))


def table_scorer(table):
    """Scorer backed by a 16-entry state -> score table."""
    return lambda loop: float(table[loop_to_state(loop)])


def toy_perturbation(flip_prob: float = 0.05) -> PerturbParams:
    return PerturbParams(cell_flip_prob=flip_prob, instrument_redraw_prob=0.0)
