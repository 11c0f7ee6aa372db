"""Per-node random streams.

Every node owns a counter-based Philox stream keyed by ``(master seed, node id)``,
so a node's draws never depend on how many other nodes exist or on execution order.
A centralized run uses node 0's stream, which is what makes a one-node network
and its centralized counterpart consume identical samples.
"""

from __future__ import annotations

import numpy as np

SAMPLE_STREAM = 0
AUX_STREAM = 1
# draws are buffered per node; the block size is part of the stream definition
BLOCK = 256


def node_generator(seed: int, node: int, stream: int = SAMPLE_STREAM) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(node), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


class IndexSampler:
    """Draws one uniform local index per node per call, with replacement."""

    def __init__(self, seed: int, sizes, block: int = BLOCK):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.block = int(block)
        self._gens = [node_generator(seed, i) for i in range(len(self.sizes))]
        self._buf = np.empty((len(self.sizes), self.block), dtype=np.int64)
        self._pos = self.block

    def _refill(self) -> None:
        for i, (gen, m) in enumerate(zip(self._gens, self.sizes)):
            self._buf[i] = gen.integers(0, m, size=self.block)
        self._pos = 0

    def draw(self) -> np.ndarray:
        if self._pos == self.block:
            self._refill()
        out = self._buf[:, self._pos].copy()
        self._pos += 1
        return out


def aux_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-node streams for choices other than sample indices."""
    return [node_generator(seed, i, AUX_STREAM) for i in range(n)]
