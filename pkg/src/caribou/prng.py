"""Deterministic random streams built on the Philox counter-based generator.

Every stochastic component of the library draws from a stream keyed by
(seed, context ids) so that results are reproducible regardless of the
order in which streams are consumed.  Philox-4x64 takes a 2-word key:
word 0 carries the user seed, word 1 packs up to two 32-bit context ids.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Return an independent Generator for the given seed and context ids.

    At most two context ids are supported; each must fit in 32 bits.
    Normal variates drawn from the returned generator use NumPy's
    ziggurat sampler.
    """
    if len(ids) > 2:
        raise ValueError("at most two stream ids are supported")
    packed = 0
    for i, sid in enumerate(ids):
        if not 0 <= sid < (1 << 32):
            raise ValueError(f"stream id {sid} outside [0, 2^32)")
        packed |= sid << (32 * i)
    key = np.array([seed & _MASK64, packed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
