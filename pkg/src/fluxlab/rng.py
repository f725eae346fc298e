"""Counter-based random number streams for reproducible parallel Monte Carlo.

Every stream is a value: a (seed, stream, counter) triple keyed into the
Philox-4x64 counter-based generator.  The same triple produces the same
output on any platform and under any degree of parallelism, and distinct
stream indices give statistically independent streams.  Replicas own
stream index = replica id; within a replica, disjoint counter regions
(tags) separate independent consumption stages so that appending work
(e.g. enlarging a start region) never disturbs draws already attributed
to existing walkers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Counter layout (four 64-bit words, little-endian advance):
#   word0, word1 <- the 128-bit user counter (word0 advances as draws are consumed)
#   word2        <- substream tag, partitioning the counter space into disjoint regions
#   word3        <- reserved, always 0
_TAG_WORD = 2


@dataclass(frozen=True)
class RngStream:
    """Value-semantic handle for a deterministic random stream."""

    seed: int
    stream: int = 0
    counter: int = 0
    tag: int = 0

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at this stream value."""
        key = np.array([self.seed & _MASK64, self.stream & _MASK64], dtype=np.uint64)
        words = [self.counter & _MASK64, (self.counter >> 64) & _MASK64, 0, 0]
        words[_TAG_WORD] = self.tag & _MASK64
        return np.random.Generator(np.random.Philox(key=key, counter=np.array(words, dtype=np.uint64)))

    def for_replica(self, replica: int) -> "RngStream":
        """Stream owned by one replica (stream index = replica id)."""
        return RngStream(self.seed, replica, 0, 0)

    def substream(self, tag: int) -> "RngStream":
        """Disjoint sub-stream for an independent consumption stage."""
        return RngStream(self.seed, self.stream, self.counter, tag)

    def advance(self, blocks: int) -> "RngStream":
        """Stream value offset by `blocks` counter blocks (one block = 4 x 64 bits)."""
        return RngStream(self.seed, self.stream, self.counter + blocks, self.tag)
