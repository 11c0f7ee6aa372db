"""Finite-sum objectives split over the nodes of a network.

Components are addressed either as ``(i, j)`` (node, local index) or by a global
index ``offsets[i] + j``; the vectorized methods take global indices so one call
can serve every node in a round. All vectorized evaluations are row-independent:
the result for a row does not depend on which other rows are in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    pass


class SingularProblemError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothnessInfo:
    L: float
    mu: float
    L_global: float | None = None

    @property
    def kappa(self) -> float:
        return self.L / self.mu


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


class ComponentOracle:
    """Common bookkeeping for ``F = (1/n) sum_i (1/m_i) sum_j f_ij``.

    Subclasses provide :meth:`component_values`, :meth:`component_gradients`,
    :meth:`node_gradient` and :meth:`smoothness`.
    """

    dim: int

    def __init__(self, sizes):
        sizes = np.asarray(sizes, dtype=np.int64)
        if sizes.ndim != 1 or len(sizes) == 0 or np.any(sizes < 1):
            raise ValueError(f"every node needs at least one component, got sizes={sizes}")
        self.sizes = sizes
        self.n = len(sizes)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        self.starts = self.offsets[:-1]
        self.num_components = int(self.offsets[-1])
        self.node_of = np.repeat(np.arange(self.n), sizes)
        # weight of each component in F: 1/(n m_i)
        self.component_weight = 1.0 / (self.n * sizes[self.node_of])

    # -- addressing -------------------------------------------------------
    def index(self, i: int, j: int) -> int:
        if not 0 <= i < self.n or not 0 <= j < self.sizes[i]:
            raise IndexError(f"no component ({i}, {j})")
        return int(self.offsets[i] + j)

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.dim:
            raise DimensionError(f"expected parameter dimension {self.dim}, got {theta.shape[-1]}")
        return theta

    # -- scalar API ------------------------------------------------------
    def value(self, theta, i: int, j: int) -> float:
        theta = self._check_theta(theta)
        return float(self.component_values(theta[None, :], np.array([self.index(i, j)]))[0])

    def gradient(self, theta, i: int, j: int) -> np.ndarray:
        theta = self._check_theta(theta)
        return self.component_gradients(theta[None, :], np.array([self.index(i, j)]))[0]

    # -- vectorized API ----------------------------------------------------
    def component_values(self, thetas: np.ndarray, comps: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def component_gradients(self, thetas: np.ndarray, comps: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def node_gradient(self, theta: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError

    def node_value(self, theta, i: int) -> float:
        theta = self._check_theta(theta)
        comps = np.arange(self.offsets[i], self.offsets[i + 1])
        vals = self.component_values(np.broadcast_to(theta, (len(comps), self.dim)), comps)
        return float(vals.mean())

    def local_batch_gradient(self, theta, i: int) -> np.ndarray:
        return self.node_gradient(self._check_theta(theta), i)

    def batch_gradients(self, X: np.ndarray, nodes=None) -> np.ndarray:
        """Local batch gradients ``grad f_i(X[i])``; ``nodes`` selects a subset of rows."""
        X = self._check_theta(X)
        nodes = range(self.n) if nodes is None else nodes
        return np.stack([self.node_gradient(X[k], i) for k, i in enumerate(nodes)])

    def global_value(self, theta) -> float:
        theta = self._check_theta(theta)
        vals = self.component_values(np.broadcast_to(theta, (self.num_components, self.dim)),
                                     np.arange(self.num_components))
        return float(np.dot(self.component_weight, vals))

    def global_gradient(self, theta) -> np.ndarray:
        theta = self._check_theta(theta)
        return np.mean([self.node_gradient(theta, i) for i in range(self.n)], axis=0)

    def smoothness(self) -> SmoothnessInfo:
        raise NotImplementedError

    def pooled(self) -> "ComponentOracle":
        """The same components held by a single node (for centralized baselines)."""
        raise NotImplementedError

    # Newton's method is used for the reference solve when available
    def global_hessian(self, theta) -> np.ndarray | None:
        return None


class LogisticProblem(ComponentOracle):
    """Regularized logistic loss with an appended, unregularized bias.

    ``theta = [b; c]`` and ``f_ij(theta) = ln(1 + exp(-(b.x + c) y)) + (lambda/2)|b|^2``.
    The regularizer sits in every component so each ``f_ij`` is strongly convex in ``b``.
    """

    def __init__(self, features, labels, sizes, lambda_reg: float):
        super().__init__(sizes)
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=float)
        if features.shape[0] != self.num_components or labels.shape != (self.num_components,):
            raise DimensionError("features/labels do not match the node sizes")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
        if not lambda_reg > 0:
            raise ValueError("lambda_reg must be positive")
        self.features = features
        self.labels = labels
        self.lambda_reg = float(lambda_reg)
        self.design = np.hstack([features, np.ones((len(features), 1))])
        self.dim = self.design.shape[1]
        self.reg_mask = np.ones(self.dim)
        self.reg_mask[-1] = 0.0

    @classmethod
    def from_partition(cls, dataset, partition, lambda_reg: float | None = None) -> "LogisticProblem":
        """Stack node batches in node order; ``lambda_reg`` defaults to ``1/N``."""
        order = np.concatenate(partition.indices)
        lam = 1.0 / dataset.num_samples if lambda_reg is None else lambda_reg
        return cls(dataset.features[order], dataset.labels[order], partition.sizes, lam)

    def _margins(self, thetas, comps):
        a = self.design[comps]
        return a, np.sum(a * thetas, axis=1)

    def component_values(self, thetas, comps):
        thetas = self._check_theta(thetas)
        comps = np.asarray(comps)
        _, z = self._margins(thetas, comps)
        b = thetas * self.reg_mask
        return np.logaddexp(0.0, -self.labels[comps] * z) + 0.5 * self.lambda_reg * np.sum(b * b, axis=1)

    def glm_coefficients(self, thetas, comps):
        """Scalar ``phi_j`` with ``grad f_j = phi_j [x_j; 1] + lambda [b; 0]``."""
        _, z = self._margins(thetas, comps)
        y = self.labels[comps]
        return -y * _sigmoid(-y * z)

    def regularizer_gradient(self, thetas):
        return self.lambda_reg * self.reg_mask * thetas

    def component_gradients(self, thetas, comps):
        thetas = self._check_theta(thetas)
        comps = np.asarray(comps)
        a, z = self._margins(thetas, comps)
        y = self.labels[comps]
        coef = -y * _sigmoid(-y * z)
        return coef[:, None] * a + self.lambda_reg * self.reg_mask * thetas

    def node_gradient(self, theta, i):
        sl = slice(self.offsets[i], self.offsets[i + 1])
        a, y = self.design[sl], self.labels[sl]
        coef = -y * _sigmoid(-y * (a @ theta))
        return (a.T @ coef) / self.sizes[i] + self.lambda_reg * self.reg_mask * theta

    def global_value(self, theta):
        theta = self._check_theta(theta)
        z = self.design @ theta
        b = theta * self.reg_mask
        return float(np.dot(self.component_weight, np.logaddexp(0.0, -self.labels * z))
                     + 0.5 * self.lambda_reg * np.dot(b, b))

    def global_gradient(self, theta):
        theta = self._check_theta(theta)
        y = self.labels
        coef = -y * _sigmoid(-y * (self.design @ theta)) * self.component_weight
        return self.design.T @ coef + self.lambda_reg * self.reg_mask * theta

    def global_hessian(self, theta):
        z = self.design @ theta
        s = _sigmoid(z)
        w = s * (1.0 - s) * self.component_weight
        H = self.design.T @ (self.design * w[:, None])
        H[np.diag_indices(self.dim)] += self.lambda_reg * self.reg_mask
        return H

    def smoothness(self) -> SmoothnessInfo:
        L_comp = 0.25 * np.sum(self.design * self.design, axis=1) + self.lambda_reg
        cov = self.design.T @ (self.design * self.component_weight[:, None])
        L_global = 0.25 * float(np.linalg.eigvalsh(cov)[-1]) + self.lambda_reg
        return SmoothnessInfo(L=float(L_comp.max()), mu=self.lambda_reg, L_global=L_global)

    def pooled(self) -> "LogisticProblem":
        return LogisticProblem(self.features, self.labels, [self.num_components], self.lambda_reg)


class QuadraticProblem(ComponentOracle):
    """``f_ij(theta) = 1/2 theta^T A_ij theta - c_ij^T theta + (ridge/2)|theta|^2``."""

    def __init__(self, A, c, sizes, ridge: float = 0.0):
        super().__init__(sizes)
        A = np.asarray(A, dtype=float)
        c = np.asarray(c, dtype=float)
        N = self.num_components
        if A.ndim != 3 or A.shape[0] != N or A.shape[1] != A.shape[2] or c.shape != A.shape[:2]:
            raise DimensionError(f"expected A of shape ({N}, p, p) and c of shape ({N}, p)")
        self.A = A
        self.c = c
        self.ridge = float(ridge)
        self.dim = A.shape[1]
        # node-level means; F weights nodes equally
        self.node_A = np.stack([A[self.offsets[i]:self.offsets[i + 1]].mean(axis=0) for i in range(self.n)])
        self.node_c = np.stack([c[self.offsets[i]:self.offsets[i + 1]].mean(axis=0) for i in range(self.n)])
        self.hessian = self.node_A.mean(axis=0) + self.ridge * np.eye(self.dim)
        self.linear = self.node_c.mean(axis=0)

    def component_values(self, thetas, comps):
        thetas = self._check_theta(thetas)
        comps = np.asarray(comps)
        At = np.einsum("kij,kj->ki", self.A[comps], thetas)
        return (0.5 * np.sum(thetas * At, axis=1) - np.sum(self.c[comps] * thetas, axis=1)
                + 0.5 * self.ridge * np.sum(thetas * thetas, axis=1))

    def component_gradients(self, thetas, comps):
        thetas = self._check_theta(thetas)
        comps = np.asarray(comps)
        return np.einsum("kij,kj->ki", self.A[comps], thetas) - self.c[comps] + self.ridge * thetas

    def node_gradient(self, theta, i):
        return self.node_A[i] @ theta - self.node_c[i] + self.ridge * theta

    def batch_gradients(self, X, nodes=None):
        X = self._check_theta(X)
        idx = np.arange(self.n) if nodes is None else np.asarray(list(nodes))
        return np.einsum("kij,kj->ki", self.node_A[idx], X) - self.node_c[idx] + self.ridge * X

    def global_value(self, theta):
        theta = self._check_theta(theta)
        return float(0.5 * theta @ self.hessian @ theta - self.linear @ theta)

    def global_gradient(self, theta):
        theta = self._check_theta(theta)
        return self.hessian @ theta - self.linear

    def global_hessian(self, theta):
        return self.hessian.copy()

    def minimizer(self) -> np.ndarray:
        if np.linalg.eigvalsh(self.hessian)[0] <= 1e-14 * max(1.0, np.abs(self.hessian).max()):
            raise SingularProblemError("global Hessian is singular")
        return np.linalg.solve(self.hessian, self.linear)

    def smoothness(self) -> SmoothnessInfo:
        L_comp = np.linalg.eigvalsh(self.A)[:, -1].max() + self.ridge
        ev = np.linalg.eigvalsh(self.hessian)
        return SmoothnessInfo(L=float(L_comp), mu=float(ev[0]), L_global=float(ev[-1]))

    def pooled(self) -> "QuadraticProblem":
        return QuadraticProblem(self.A, self.c, [self.num_components], self.ridge)

    # -- text fixtures -----------------------------------------------------
    def save(self, path: str | Path) -> None:
        lines = ["quadratic 1", f"n {self.n}", f"p {self.dim}", f"ridge {self.ridge!r}",
                 "sizes " + " ".join(str(int(m)) for m in self.sizes)]
        for g in range(self.num_components):
            i = int(self.node_of[g])
            lines.append(f"component {i} {g - int(self.offsets[i])}")
            lines.append("A " + " ".join(repr(float(v)) for v in self.A[g].ravel()))
            lines.append("c " + " ".join(repr(float(v)) for v in self.c[g]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "QuadraticProblem":
        tokens = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not tokens or tokens[0][:1] != ["quadratic"]:
            raise ValueError(f"{path}: not a quadratic fixture")
        head = {t[0]: t[1:] for t in tokens[1:5]}
        p = int(head["p"][0])
        sizes = [int(v) for v in head["sizes"]]
        A, c = [], []
        for t in tokens[5:]:
            if t[0] == "A":
                A.append(np.array([float(v) for v in t[1:]]).reshape(p, p))
            elif t[0] == "c":
                c.append(np.array([float(v) for v in t[1:]]))
        return cls(np.array(A), np.array(c), sizes, float(head["ridge"][0]))


def make_quadratic_problem(n: int, m: int, p: int, *, heterogeneity: float = 1.0, noise: float = 0.0,
                           curvature: tuple[float, float] = (1.0, 4.0), ridge: float = 0.0,
                           seed: int = 0) -> QuadraticProblem:
    """Random strongly convex quadratics with node centers spread by ``heterogeneity``.

    Component ``(i, j)`` has Hessian ``Q diag(e) Q^T`` with eigenvalues in ``curvature``
    and minimizer ``u_i + noise * xi_ij`` where ``u_i`` is the node center.
    """
    rng = np.random.default_rng(seed)
    lo, hi = curvature
    base = rng.standard_normal(p)
    centers = base + heterogeneity * rng.standard_normal((n, p))
    A = np.empty((n * m, p, p))
    c = np.empty((n * m, p))
    for g in range(n * m):
        Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
        e = rng.uniform(lo, hi, size=p)
        A[g] = (Q * e) @ Q.T
        A[g] = 0.5 * (A[g] + A[g].T)
        target = centers[g // m] + noise * rng.standard_normal(p)
        c[g] = A[g] @ target
    return QuadraticProblem(A, c, [m] * n, ridge)


def make_least_squares_problem(n: int, m: int, p: int, *, ridge: float = 0.1, heterogeneity: float = 0.5,
                               noise: float = 0.1, seed: int = 0) -> QuadraticProblem:
    """Rank-one components ``1/2 (a^T theta - y)^2`` with unit-norm rows ``a``."""
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(p)
    a = rng.standard_normal((n * m, p))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    shift = heterogeneity * rng.standard_normal((n, p))
    y = np.einsum("kj,kj->k", a, truth + shift[np.repeat(np.arange(n), m)]) + noise * rng.standard_normal(n * m)
    A = a[:, :, None] * a[:, None, :]
    c = a * y[:, None]
    return QuadraticProblem(A, c, [m] * n, ridge)


def heterogeneity_b(oracle: ComponentOracle, theta_star) -> float:
    """Average squared norm of the local batch gradients at the global minimizer."""
    theta_star = np.asarray(theta_star, dtype=float)
    G = oracle.batch_gradients(np.broadcast_to(theta_star, (oracle.n, oracle.dim)))
    return float(np.mean(np.sum(G * G, axis=1)))


def gradient_descent(oracle: ComponentOracle, theta0=None, step: float | None = None,
                     tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    theta = np.zeros(oracle.dim) if theta0 is None else np.array(theta0, dtype=float)
    info = oracle.smoothness()
    step = 1.0 / (info.L_global or info.L) if step is None else step
    for _ in range(max_iter):
        g = oracle.global_gradient(theta)
        if np.linalg.norm(g) < tol:
            break
        theta = theta - step * g
    return theta


def reference_solution(oracle: ComponentOracle, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """High-precision minimizer of ``F``.

    Quadratics are solved directly; objectives with a Hessian use damped Newton
    steps with Armijo backtracking until ``|grad F| < tol``; anything else falls
    back to batch gradient descent.
    """
    if isinstance(oracle, QuadraticProblem):
        return oracle.minimizer()
    theta = np.zeros(oracle.dim)
    if oracle.global_hessian(theta) is None:
        return gradient_descent(oracle, theta, tol=tol)
    best, best_norm = theta, np.inf
    for _ in range(max_iter):
        g = oracle.global_gradient(theta)
        gnorm = float(np.linalg.norm(g))
        if gnorm < best_norm:
            best, best_norm = theta, gnorm
        if gnorm < tol:
            return theta
        step = np.linalg.solve(oracle.global_hessian(theta), g)
        full = theta - step
        if np.linalg.norm(oracle.global_gradient(full)) < gnorm:
            theta = full
            continue
        f0, t = oracle.global_value(theta), 0.5
        while oracle.global_value(theta - t * step) > f0 - 1e-4 * t * float(g @ step):
            t *= 0.5
            if t < 1e-10:
                return best
        theta = theta - t * step
    return best
