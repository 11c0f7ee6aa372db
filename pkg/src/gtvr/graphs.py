"""Undirected communication graphs, Metropolis mixing matrices and the mixing rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

KINDS = ("ring", "complete", "exponential", "random_geometric")


class GraphError(ValueError):
    """Invalid topology request or a topology that cannot mix."""


class DisconnectedGraphError(GraphError):
    pass


class NonMixingError(GraphError):
    pass


@dataclass(frozen=True)
class Topology:
    """Static undirected graph over nodes ``0..n-1``.

    ``edges`` holds each unordered pair once as ``(i, r)`` with ``i < r``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    kind: str
    seed: int | None = None
    params: dict = field(default_factory=dict)
    positions: np.ndarray | None = field(default=None, repr=False, compare=False)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=bool)
        for i, r in self.edges:
            A[i, r] = A[r, i] = True
        return A

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1).astype(np.int64)

    def neighbors(self, i: int) -> list[int]:
        return [int(r) for r in np.flatnonzero(self.adjacency()[i])]

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        ncomp, _ = connected_components(csr_matrix(self.adjacency()), directed=False)
        return ncomp == 1


def _canonical_edges(pairs) -> tuple[tuple[int, int], ...]:
    out = set()
    for i, r in pairs:
        i, r = int(i), int(r)
        if i == r:
            continue
        out.add((min(i, r), max(i, r)))
    return tuple(sorted(out))


def exponential_offsets(n: int) -> list[int]:
    """Circulant offsets ``±2^j mod n`` for ``j < floor(log2 n)``, duplicates collapsed."""
    if n < 2:
        return []
    offs = set()
    for j in range(int(math.floor(math.log2(n)))):
        for o in (2**j % n, (-(2**j)) % n):
            if o:
                offs.add(o)
    return sorted(offs)


def build_topology(kind: str, n: int, params: dict | None = None, seed: int | None = None) -> Topology:
    """Build a connected undirected graph.

    ``random_geometric`` needs ``params["radius"]``; nodes are placed uniformly in the
    unit square from ``seed`` and pairs closer than the radius are joined. A draw that
    is not connected raises :class:`DisconnectedGraphError`; pick another seed.
    """
    params = dict(params or {})
    if kind not in KINDS:
        raise GraphError(f"unknown graph kind {kind!r}; expected one of {KINDS}")
    if n < 1:
        raise GraphError(f"graph needs at least one node, got n={n}")

    positions = None
    if kind == "ring":
        pairs = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    elif kind == "complete":
        pairs = [(i, r) for i in range(n) for r in range(i + 1, n)]
    elif kind == "exponential":
        pairs = [(i, (i + o) % n) for i in range(n) for o in exponential_offsets(n)]
    else:
        radius = params.get("radius")
        if radius is None or not radius > 0:
            raise GraphError("random_geometric graph needs a positive radius")
        rng = np.random.default_rng(seed)
        positions = rng.random((n, 2))
        diff = positions[:, None, :] - positions[None, :, :]
        close = np.einsum("ijk,ijk->ij", diff, diff) <= radius * radius
        ii, rr = np.nonzero(np.triu(close, k=1))
        pairs = zip(ii, rr)

    topo = Topology(n=n, edges=_canonical_edges(pairs), kind=kind, seed=seed, params=params, positions=positions)
    if not topo.is_connected():
        raise DisconnectedGraphError(
            f"random_geometric draw with seed={seed}, radius={params.get('radius')} is disconnected"
        )
    return topo


def metropolis_weights(topology: Topology, lazy: bool = False) -> np.ndarray:
    """Metropolis-Hastings weights ``w_ir = 1/(1 + max(deg_i, deg_r))`` on edges.

    The diagonal takes the remaining mass of each row. With ``lazy=True`` the
    result is ``(I + W) / 2``, which halves every off-diagonal weight.
    """
    if not topology.is_connected():
        raise DisconnectedGraphError("Metropolis weights need a connected topology")
    n = topology.n
    deg = topology.degrees()
    W = np.zeros((n, n))
    for i, r in topology.edges:
        W[i, r] = W[r, i] = 1.0 / (1.0 + max(deg[i], deg[r]))
    if lazy:
        W *= 0.5
    # fixed summation order keeps the diagonal reproducible
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


@dataclass(frozen=True)
class SpectralInfo:
    lam: float

    @property
    def gap(self) -> float:
        return 1.0 - self.lam


def spectral_gap(W: np.ndarray) -> SpectralInfo:
    """Spectral radius of ``W - 11^T/n`` for a symmetric doubly-stochastic ``W``."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    ev = np.linalg.eigvalsh(W - np.full((n, n), 1.0 / n))
    lam = float(np.max(np.abs(ev)))
    if lam >= 1.0 - 1e-10:
        raise NonMixingError(f"weight matrix does not mix (lambda={lam:.16g})")
    return SpectralInfo(max(lam, 0.0))


def weight_matrix_violations(W: np.ndarray, topology: Topology | None = None, tol: float = 1e-12) -> list[str]:
    """Return human-readable violations of the mixing-matrix invariants (empty when valid)."""
    W = np.asarray(W, dtype=float)
    problems = []
    n = W.shape[0]
    if W.shape != (n, n):
        return [f"matrix is not square: {W.shape}"]
    if np.max(np.abs(W - W.T)) > tol:
        problems.append("not symmetric")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > tol:
        problems.append("rows do not sum to one")
    if np.min(W) < 0:
        problems.append("negative entries")
    if np.min(np.diag(W)) <= 0:
        problems.append("diagonal not strictly positive")
    if topology is not None:
        pattern = topology.adjacency() | np.eye(n, dtype=bool)
        if not np.array_equal(W > 0, pattern):
            problems.append("sparsity pattern differs from topology")
    return problems


def write_weights(path: str | Path, topology: Topology, W: np.ndarray) -> None:
    """Plain-text dump: ``#`` header lines, then one ``i r w_ir`` line per nonzero entry."""
    lines = [f"# n={topology.n} kind={topology.kind}"]
    if topology.seed is not None:
        lines.append(f"# seed={topology.seed}")
    for key, val in sorted(topology.params.items()):
        lines.append(f"# {key}={val!r}")
    for i, r in zip(*np.nonzero(W)):
        lines.append(f"{i} {r} {float(W[i, r])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_weights(path: str | Path) -> tuple[dict, np.ndarray]:
    header: dict[str, str] = {}
    triples = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    header[key] = val
            continue
        i, r, w = line.split()
        triples.append((int(i), int(r), float(w)))
    if "n" not in header:
        raise GraphError(f"{path}: missing 'n=' header")
    n = int(header["n"])
    W = np.zeros((n, n))
    for i, r, w in triples:
        W[i, r] = w
    return header, W
