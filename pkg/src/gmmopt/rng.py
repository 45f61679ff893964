"""Counter-based random streams.

All randomness in the package flows through Philox-keyed generators so that
results are bit-reproducible across runs and platforms, and so that derived
streams (per trial, per iteration, per purpose) never overlap. Philox is a
64-bit counter-based generator; a stream is identified by (seed, purpose,
index), packed into the two 64-bit key words.
"""
from __future__ import annotations

import enum

import numpy as np


class Purpose(enum.IntEnum):
    DATAGEN = 1
    INIT = 2
    SELECT = 3
    FOLDS = 4
    TASK = 5


def stream(seed: int, purpose: Purpose | int, index: int = 0) -> np.random.Generator:
    """Independent generator for (seed, purpose, index).

    Changing `index` (e.g. the iteration counter) yields a fresh stream
    without consuming draws from any other, so extending a run never
    perturbs earlier iterations.
    """
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    key = [np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF),
           (np.uint64(purpose) << np.uint64(48)) | np.uint64(index)]
    return np.random.Generator(np.random.Philox(key=key))
