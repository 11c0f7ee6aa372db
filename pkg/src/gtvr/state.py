"""Mutable run state shared by the centralized and decentralized solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NetworkState:
    """Stacked node states plus exact work counters.

    ``X`` holds one parameter row per node, ``D`` the gradient trackers and ``V``
    the current local gradient estimators (``g`` or ``v``). ``k`` counts
    communication-synchronous rounds (inner steps for the double-loop methods) and
    ``outer`` counts completed outer loops. Observers receive this object live and
    must copy anything they keep.
    """

    X: np.ndarray
    D: np.ndarray | None = None
    V: np.ndarray | None = None
    k: int = 0
    outer: int = 0
    evals: np.ndarray = field(default=None)
    comms: int = 0

    def __post_init__(self):
        if self.evals is None:
            self.evals = np.zeros(len(self.X), dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def max_evals(self) -> int:
        return int(self.evals.max())


def initial_iterate(dim: int, n: int, theta0=None) -> np.ndarray:
    """All nodes start from ``theta0`` (zeros by default)."""
    base = np.zeros(dim) if theta0 is None else np.asarray(theta0, dtype=float)
    if base.ndim == 1:
        return np.tile(base, (n, 1))
    if base.shape != (n, dim):
        raise ValueError(f"initial iterate must be ({dim},) or ({n}, {dim}), got {base.shape}")
    return base.copy()
