"""Deterministic seed derivation.

All randomness in the harness flows through numpy's PCG64 seeded via
SeedSequence keys.  Streams are addressed by (root seed, stream tag,
optional extra keys) so that results are reproducible run-to-run and
independent of execution order or parallelism.  Stream tags are fixed
integers, never strings, because Python string hashing is salted per
process.
"""

from __future__ import annotations

import numpy as np

# Stream tags. Values are arbitrary but frozen: changing any of them
# changes every derived random stream.
STREAM_SCENARIO = 0x5C
STREAM_OBS_NOISE = 0x0B
STREAM_CTRL_NOISE = 0xC7
STREAM_ROAD = 0x40
STREAM_TREE = 0x7E
STREAM_MATCH_TIE = 0x71
STREAM_CONFIRM = 0xCF
STREAM_COVER = 0xCA
STREAM_JITTER = 0x31
STREAM_LABEL_NOISE = 0x1B


def spawn_seed(*keys: int) -> int:
    """Derive a 64-bit child seed from integer keys."""
    ss = np.random.SeedSequence(list(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_generator(*keys: int) -> np.random.Generator:
    """A PCG64 generator addressed by integer keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(keys))))


class BlockNoise:
    """Lazily materialised stream of standard normals.

    Draw ``j`` is the j-th element of the stream regardless of how many
    draws the consumer has made so far, which keeps per-step noise a pure
    function of (keys, step index).
    """

    _BLOCK = 1024

    def __init__(self, *keys: int):
        self._gen = make_generator(*keys)
        self._values = np.empty(0, dtype=np.float64)

    def at(self, index: int) -> float:
        while index >= self._values.size:
            block = self._gen.standard_normal(self._BLOCK)
            self._values = np.concatenate([self._values, block])
        return float(self._values[index])

    def row(self, index: int, width: int) -> np.ndarray:
        """Values [index*width, (index+1)*width) as one row."""
        end = (index + 1) * width
        while end > self._values.size:
            block = self._gen.standard_normal(self._BLOCK)
            self._values = np.concatenate([self._values, block])
        return self._values[index * width : end].copy()
