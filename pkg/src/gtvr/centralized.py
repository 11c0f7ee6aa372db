"""Centralized SGD, SAGA and SVRG on the pooled data, plus the shared SAGA table.

A centralized run is a one-node network: it draws from node 0's random stream
and uses the same table and estimator code as the decentralized methods, so a
decentralized method on a single node reproduces its centralized counterpart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import MetricRecorder, Trace
from .parallel import Evaluator
from .sampling import IndexSampler, aux_generators
from .state import NetworkState, initial_iterate

SCHEDULES = ("constant", "harmonic")
SVRG_OPTIONS = {"a": "a", "b": "b", "c": "c", "last": "a", "average": "b", "random": "c"}
SAGA_STORAGE = ("full", "compact")


@dataclass(frozen=True)
class StepSchedule:
    """``alpha`` for ``constant``; ``alpha / (k + offset)`` for ``harmonic``."""

    kind: str = "constant"
    alpha: float = 0.1
    offset: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULES}")
        if not self.alpha > 0 or not self.offset > 0:
            raise ValueError("step sizes must be positive")

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.alpha
        return self.alpha / (k + self.offset)


def svrg_option(option: str) -> str:
    try:
        return SVRG_OPTIONS[option]
    except KeyError:
        raise ValueError(f"unknown SVRG option {option!r}; expected a, b or c") from None


class SagaTable:
    """Per-node tables of stored component gradients with running node averages.

    ``storage="full"`` keeps every gradient vector. ``storage="compact"`` works for
    objectives exposing ``glm_coefficients`` (gradient = scalar * feature row plus
    an exact regularizer term): it stores one scalar per component and evaluates
    the regularizer gradient at the current point instead of storing it.
    Averages are updated incrementally and recomputed from scratch every
    ``resync_every`` replacements to stop rounding drift.
    """

    def __init__(self, oracle, X0, storage: str = "full", evaluator: Evaluator | None = None,
                 resync_every: int | None = None):
        if storage not in SAGA_STORAGE:
            raise ValueError(f"unknown SAGA storage {storage!r}")
        if storage == "compact" and not hasattr(oracle, "glm_coefficients"):
            raise ValueError("compact SAGA storage needs an objective with GLM structure")
        self.oracle = oracle
        self.storage = storage
        self.ev = evaluator or Evaluator(oracle)
        self.resync_every = int(resync_every or 10 * int(oracle.sizes.max()))
        self._since_resync = 0
        comps = np.arange(oracle.num_components)
        thetas = np.asarray(X0)[oracle.node_of]
        if storage == "full":
            self.entries = self.ev.component_gradients(thetas, comps)
        else:
            self.entries = self.ev.glm_coefficients(thetas, comps)
        self.resync()

    def resync(self) -> None:
        o = self.oracle
        rows = []
        for i in range(o.n):
            sl = slice(o.offsets[i], o.offsets[i + 1])
            if self.storage == "full":
                rows.append(self.entries[sl].mean(axis=0))
            else:
                rows.append(o.design[sl].T @ self.entries[sl] / o.sizes[i])
        self.sums = np.stack(rows)
        self._since_resync = 0

    def means(self, X) -> np.ndarray:
        """Average stored gradient per node; compact mode adds the exact regularizer at ``X``."""
        if self.storage == "full":
            return self.sums.copy()
        return self.sums + self.oracle.regularizer_gradient(np.asarray(X))

    def estimate(self, X, comps):
        """SAGA estimator at ``X`` for global components ``comps`` (one per row).

        Returns ``(g, fresh)``; pass ``fresh`` to :meth:`replace` to update the table.
        """
        X = np.asarray(X)
        if self.storage == "full":
            fresh = self.ev.component_gradients(X, comps)
            return fresh - self.entries[comps] + self.sums, fresh
        fresh = self.ev.glm_coefficients(X, comps)
        a = self.oracle.design[comps]
        g = (fresh - self.entries[comps])[:, None] * a + self.sums + self.oracle.regularizer_gradient(X)
        return g, fresh

    def replace(self, comps, fresh) -> None:
        comps = np.asarray(comps)
        old = self.entries[comps]
        m = self.oracle.sizes[self.oracle.node_of[comps]]
        if self.storage == "full":
            delta = (fresh - old) / m[:, None]
        else:
            delta = ((fresh - old) / m)[:, None] * self.oracle.design[comps]
        # one component per node, so rows never collide
        self.sums[self.oracle.node_of[comps]] += delta
        self.entries[comps] = fresh
        self._since_resync += 1
        if self._since_resync >= self.resync_every:
            self.resync()

    def drift(self) -> float:
        """Largest gap between the running averages and freshly recomputed ones."""
        kept = self.sums.copy()
        self.resync()
        out = float(np.max(np.abs(kept - self.sums)))
        self.sums = kept
        return out


def svrg_estimate(ev, X, anchor, anchor_grad, comps) -> np.ndarray:
    """``grad f_s(X) - grad f_s(anchor) + anchor_grad`` for one component ``s`` per row.

    ``ev`` is an :class:`Evaluator` or any object with ``component_gradients``.
    """
    return ev.component_gradients(X, comps) - ev.component_gradients(anchor, comps) + anchor_grad


def pooled(oracle):
    return oracle if oracle.n == 1 else oracle.pooled()


def _recorder(oracle, recorder, record_every, name):
    if recorder is not None:
        return recorder
    return MetricRecorder(oracle, record_every=record_every, algorithm=name)


def _emit(recorder, state, force=False, D=None, V=None):
    if force or recorder.due(state.k):
        recorder.record(state.k, state.X, state.max_evals, state.comms, D, V)


def run_sgd(oracle, schedule: StepSchedule, iterations: int, seed: int, *, theta0=None,
            recorder: MetricRecorder | None = None, observer=None, record_every: int | None = None) -> Trace:
    """``theta_{k+1} = theta_k - alpha_k grad f_{s_k}(theta_k)`` with uniform ``s_k``."""
    o = pooled(oracle)
    rec = _recorder(o, recorder, record_every or o.num_components, "sgd")
    sampler = IndexSampler(seed, o.sizes)
    st = NetworkState(initial_iterate(o.dim, 1, theta0))
    _emit(rec, st, force=True)
    for k in range(iterations):
        s = sampler.draw()
        g = o.component_gradients(st.X, s)
        st.X = st.X - schedule(k) * g
        st.evals += 1
        st.k = k + 1
        st.V = g
        if observer is not None:
            observer(st)
        _emit(rec, st, force=st.k == iterations)
    return rec.trace


def run_saga(oracle, alpha: float, iterations: int, seed: int, *, theta0=None, storage: str = "full",
             recorder: MetricRecorder | None = None, observer=None, record_every: int | None = None) -> Trace:
    """SAGA with the table filled at ``theta_0``.

    The first step uses ``g_0`` = table average = ``grad F(theta_0)``; every later
    step draws one component, so the counter reads ``N + k`` after ``k`` steps.
    """
    o = pooled(oracle)
    rec = _recorder(o, recorder, record_every or o.num_components, "saga")
    sampler = IndexSampler(seed, o.sizes)
    st = NetworkState(initial_iterate(o.dim, 1, theta0))
    table = SagaTable(o, st.X, storage)
    st.evals += o.num_components
    st.V = table.means(st.X)
    _emit(rec, st, force=True)
    for k in range(iterations):
        st.X = st.X - alpha * st.V
        s = sampler.draw()
        g, fresh = table.estimate(st.X, s)
        table.replace(s, fresh)
        st.V = g
        st.evals += 1
        st.k = k + 1
        if observer is not None:
            observer(st)
        _emit(rec, st, force=st.k == iterations)
    return rec.trace


def run_svrg(oracle, alpha: float, T: int, outer_iterations: int, option: str, seed: int, *, theta0=None,
             recorder: MetricRecorder | None = None, observer=None, record_every: int = 1) -> Trace:
    """SVRG with an exact anchor gradient; records once per outer loop.

    Inner estimator ``v_t = grad f_s(theta_t) - grad f_s(anchor) + grad F(anchor)``
    for ``t = 0..T-1``; the next outer iterate is the last inner iterate (``a``),
    the average of ``theta_0..theta_{T-1}`` (``b``) or a uniformly chosen one (``c``).
    Trace rows carry ``k`` = total inner steps.
    """
    if T < 1:
        raise ValueError("SVRG needs an inner-loop length T >= 1")
    option = svrg_option(option)
    o = pooled(oracle)
    rec = _recorder(o, recorder, 1, "svrg")
    rec.record_every = 1
    sampler = IndexSampler(seed, o.sizes)
    aux = aux_generators(seed, 1)[0]
    st = NetworkState(initial_iterate(o.dim, 1, theta0))
    rec.record(0, st.X, 0, 0)
    for outer in range(outer_iterations):
        anchor = st.X
        full = o.batch_gradients(anchor)
        st.evals += o.num_components
        pick = int(aux.integers(0, T)) if option == "c" else -1
        chosen, total = None, np.zeros_like(anchor)
        theta = anchor
        for t in range(T):
            if t == pick:
                chosen = theta
            total = total + theta
            s = sampler.draw()
            v = svrg_estimate(o, theta, anchor, full, s)
            st.evals += 2
            theta = theta - alpha * v
            st.V = v
            st.k += 1
            if observer is not None:
                st.X = theta
                observer(st)
        st.X = {"a": theta, "b": total / T, "c": chosen}[option]
        st.outer = outer + 1
        if st.outer % record_every == 0 or st.outer == outer_iterations:
            rec.record(st.k, st.X, st.max_evals, 0)
    return rec.trace
