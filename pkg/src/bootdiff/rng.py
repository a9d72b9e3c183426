"""Counter-based random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream ids...). Philox is counter-based: the same key always
reproduces the same sequence regardless of what other streams were consumed,
so concurrent workers using disjoint stream ids generate exactly what a
serial run would.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *ids: int) -> np.random.Generator:
    """Generator for the stream identified by (seed, *ids).

    The Philox key is derived from (seed, ids) through a SeedSequence, so
    any number of id levels is supported and distinct id tuples give
    independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(i) & _MASK64 for i in ids))
    return np.random.Generator(np.random.Philox(ss))


def spawn_seed(seed: int, *ids: int) -> int:
    """Derive a child seed deterministically (for nested components)."""
    return int(substream(seed, *ids).integers(0, 2**63 - 1))
