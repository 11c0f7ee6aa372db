"""Row-chunked oracle evaluation on a thread pool.

Every oracle call used by the optimizers is row-independent, so splitting the
rows across threads and concatenating the pieces gives bitwise the same answer
as one call. That is what makes runs identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


class Evaluator:
    def __init__(self, oracle, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.oracle = oracle
        self.workers = int(workers)
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def _chunked(self, fn, *arrays):
        rows = len(arrays[0])
        if self._pool is None or rows < 2:
            return fn(*arrays)
        bounds = np.array_split(np.arange(rows), min(self.workers, rows))
        parts = self._pool.map(lambda ix: fn(*(a[ix[0]:ix[-1] + 1] for a in arrays)), bounds)
        return np.concatenate(list(parts))

    def component_gradients(self, X, comps):
        return self._chunked(self.oracle.component_gradients, np.asarray(X), np.asarray(comps))

    def glm_coefficients(self, X, comps):
        return self._chunked(self.oracle.glm_coefficients, np.asarray(X), np.asarray(comps))

    def batch_gradients(self, X, nodes=None):
        nodes = np.arange(self.oracle.n) if nodes is None else np.asarray(nodes)
        return self._chunked(lambda x, ix: self.oracle.batch_gradients(x, ix), np.asarray(X), nodes)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
