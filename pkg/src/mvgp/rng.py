"""Deterministic random streams.

Every random draw in the package comes from a 64-bit seed split into
independent substreams keyed by ``(seed, stream_id, block)``. Draw
``i`` of a batch always lives in block ``i // BLOCK_SIZE``, so a batch
filled block by block (serially or in parallel) is identical to one
filled in a single pass.
"""

from __future__ import annotations

import numpy as np

BLOCK_SIZE = 4096

# Stream ids used internally. Callers may use any other non-negative integer.
STREAM_MATNORM = 1
STREAM_WALK = 2
STREAM_RESTARTS = 3


def generator(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.PCG64(ss))


def standard_normal(seed: int, stream: int, count: int, shape: tuple[int, ...]) -> np.ndarray:
    """Array of shape ``(count, *shape)`` of iid N(0, 1) draws, block-substreamed."""
    if count < 1:
        raise ValueError("count must be at least 1")
    out = np.empty((count, *shape))
    for block, start in enumerate(range(0, count, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, count)
        out[start:stop] = generator(seed, stream, block).standard_normal((stop - start, *shape))
    return out
