"""Named, counter-addressed random streams.

Every stream is a Philox generator keyed by ``(seed, name, *counters)``, so a
draw for (epoch 3, batch 7, "noise") never depends on how many numbers other
streams or earlier batches consumed.
"""

from __future__ import annotations

import zlib

import numpy as np

NOISE = "noise"
PHASE = "phase"
PARAMS = "params"
BITS = "bits"
INIT = "init"


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *counters: int) -> np.random.Generator:
    """Independent generator for one named stream at the given counters."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_name_key(name), *map(int, counters)))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *counters: int) -> int:
    """A 63-bit child seed, e.g. per grid point of a sweep."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(map(int, counters)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
