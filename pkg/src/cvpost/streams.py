"""Counter-based random streams keyed by (seed, stream id, sample index).

Every sample index ``i`` owns Philox4x64 block ``i`` (four 64-bit words) of
the stream keyed by ``(seed, stream)``.  Values therefore do not depend on how
a range is chunked or in which order chunks are generated.

Sampling algorithm, version 1:

* uniform: ``((word >> 11) + 0.5) * 2**-53``, strictly inside (0, 1);
* normal pairs: Box-Muller on words (0, 1) and (2, 3) of each block.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidParam

ALGORITHM_VERSION = 1

STREAM_SAMPLE = 0
STREAM_ACCEPT = 1
STREAM_BOOTSTRAP = 2

_U64 = 2**64
_INV53 = 2.0**-53


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise InvalidParam(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def blocks(seed: int, stream: int, start: int, n: int) -> np.ndarray:
    """Raw words for sample indices ``start .. start + n - 1``, shape (n, 4)."""
    bg = np.random.Philox(key=[check_seed(seed), stream], counter=int(start))
    return bg.random_raw(4 * n).reshape(n, 4)


def to_uniform(words: np.ndarray) -> np.ndarray:
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV53


def normals(seed: int, stream: int, start: int, n: int) -> np.ndarray:
    """Four independent standard normals per index, shape (n, 4)."""
    u = to_uniform(blocks(seed, stream, start, n))
    out = np.empty_like(u)
    for k in (0, 2):
        radius = np.sqrt(-2.0 * np.log(u[:, k]))
        angle = 2.0 * np.pi * u[:, k + 1]
        out[:, k] = radius * np.cos(angle)
        out[:, k + 1] = radius * np.sin(angle)
    return out


def uniforms(seed: int, stream: int, start: int, n: int) -> np.ndarray:
    """One uniform per index (first word of the block)."""
    return to_uniform(blocks(seed, stream, start, n)[:, 0])


def derive_seed(seed: int, *labels: int) -> int:
    """Child seed for an independent repetition, e.g. ``(N, run)``."""
    ss = np.random.SeedSequence([check_seed(seed), *map(int, labels)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
