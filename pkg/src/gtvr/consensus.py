"""Average consensus and dynamic average consensus on stacked node states.

States are ``(n, p)`` arrays with one row per node; the Kronecker action
``(W kron I_p) x`` is just ``W @ X``. Products go through a sparse CSR matrix,
whose row-wise summation order is fixed, so results do not depend on how many
BLAS threads are available.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix


class Mixer:
    """Reusable sparse operator ``X -> W X``."""

    def __init__(self, W):
        W = np.asarray(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"weight matrix must be square, got {W.shape}")
        self.W = W
        self.n = W.shape[0]
        self._sparse = csr_matrix(W)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != self.n:
            raise ValueError(f"expected {self.n} stacked blocks, got shape {X.shape}")
        return np.asarray(self._sparse @ X)


def mix(W, X) -> np.ndarray:
    return Mixer(W)(X)


def dac_step(W, d, r_new, r_old) -> np.ndarray:
    """One dynamic-average-consensus update ``W d + r_new - r_old``."""
    d, r_new, r_old = (np.asarray(a, dtype=float) for a in (d, r_new, r_old))
    if not d.shape == r_new.shape == r_old.shape:
        raise ValueError(f"shape mismatch: d {d.shape}, r_new {r_new.shape}, r_old {r_old.shape}")
    return mix(W, d) + (r_new - r_old)


def disagreement(X: np.ndarray) -> float:
    """Frobenius distance of ``X`` from its row average broadcast to every node."""
    return float(np.linalg.norm(X - X.mean(axis=0)))


def run_consensus(W, X0, iterations: int) -> np.ndarray:
    """Iterate ``X <- W X``; returns disagreement norms for ``k = 0..iterations``."""
    mixer = Mixer(W)
    X = np.array(X0, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    out = np.empty(iterations + 1)
    out[0] = disagreement(X)
    for k in range(1, iterations + 1):
        X = mixer(X)
        out[k] = disagreement(X)
    return out
