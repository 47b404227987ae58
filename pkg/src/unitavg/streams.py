"""Deterministic, splittable random-number streams.

Streams derive from a counter-based generator (Philox) keyed by a master
seed plus an integer path, so the stream at (seed, i, j) is statistically
independent of the stream at (seed, i, j') and can be re-created in any
order by any worker.  This is what makes simulation output a pure
function of (seed, config), independent of thread count.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator addressed by ``(seed, *path)``.

    Path components must be non-negative integers below 2**32.
    """
    key = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))
