"""Synchronous decentralized optimizers over a fixed mixing matrix.

Implemented: DSGD, GT-DGD (gradient tracking with local batch gradients),
GT-DSGD (gradient tracking with one sampled gradient per node), GT-SAGA and
GT-SVRG. Every round reads the round-``k`` neighbour states and writes round
``k+1``; mixing ``theta`` and mixing the trackers each count as one
communication round.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centralized import SAGA_STORAGE, SagaTable, StepSchedule, svrg_estimate, svrg_option
from .consensus import Mixer
from .metrics import MetricRecorder, Trace
from .parallel import Evaluator
from .sampling import IndexSampler, aux_generators
from .state import NetworkState, initial_iterate

ALGORITHMS = ("dsgd", "gt_dgd", "gt_dsgd", "gt_saga", "gt_svrg")
SVRG_TRACKERS = ("refresh", "carry")


@dataclass(frozen=True)
class RunConfig:
    """Algorithm settings for one decentralized run.

    ``iterations`` counts rounds, or outer loops for ``gt_svrg``. ``svrg_tracker``
    selects how GT-SVRG links consecutive outer loops: ``"refresh"`` feeds the
    fresh anchor estimator into the tracker as its next innovation, ``"carry"``
    keeps the last inner estimator and tracker unchanged across the boundary.
    """

    algorithm: str
    schedule: StepSchedule
    iterations: int
    seed: int = 0
    T: int | None = None
    svrg_option: str = "a"
    svrg_tracker: str = "refresh"
    saga_storage: str = "full"
    record_every: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.iterations < 1:
            raise ValueError("iteration budget must be at least 1")
        if self.algorithm == "gt_svrg":
            if self.T is None or self.T < 1:
                raise ValueError("gt_svrg needs an inner-loop length T >= 1")
            svrg_option(self.svrg_option)
            if self.svrg_tracker not in SVRG_TRACKERS:
                raise ValueError(f"unknown svrg_tracker {self.svrg_tracker!r}")
        if self.saga_storage not in SAGA_STORAGE:
            raise ValueError(f"unknown saga_storage {self.saga_storage!r}")


def default_record_every(algorithm: str, oracle) -> int:
    """Iterations per epoch: one record per ``N/n`` per-node gradient evaluations."""
    if algorithm in ("gt_dgd", "gt_svrg", "svrg"):
        return 1
    return max(1, int(round(oracle.num_components / oracle.n)))


class _Run:
    def __init__(self, oracle, W, config: RunConfig, theta0, recorder, observer):
        self.o = oracle
        self.cfg = config
        self.mix = Mixer(W)
        if self.mix.n != oracle.n:
            raise ValueError(f"weight matrix is {self.mix.n}x{self.mix.n} but the objective has {oracle.n} nodes")
        self.ev = Evaluator(oracle, config.workers)
        self.sampler = IndexSampler(config.seed, oracle.sizes)
        every = config.record_every or default_record_every(config.algorithm, oracle)
        self.rec = recorder or MetricRecorder(oracle, record_every=every, algorithm=config.algorithm)
        self.observer = observer
        self.st = NetworkState(initial_iterate(oracle.dim, oracle.n, theta0))

    def draw(self) -> np.ndarray:
        return self.o.starts + self.sampler.draw()

    def sampled(self, X, comps) -> np.ndarray:
        self.st.evals += 1
        return self.ev.component_gradients(X, comps)

    def batch(self, X) -> np.ndarray:
        self.st.evals += self.o.sizes
        return self.ev.batch_gradients(X)

    def step_done(self, last: bool) -> None:
        if self.observer is not None:
            self.observer(self.st)
        st = self.st
        if last or self.rec.due(st.k):
            self.rec.record(st.k, st.X, st.max_evals, st.comms, st.D, st.V)

    def start(self) -> None:
        st = self.st
        self.rec.record(0, st.X, st.max_evals, st.comms, st.D, st.V)
        if self.observer is not None:
            self.observer(st)

    def close(self) -> Trace:
        self.ev.close()
        return self.rec.trace


def run_dsgd(oracle, W, config: RunConfig, *, theta0=None, recorder=None, observer=None) -> Trace:
    """``theta^i <- sum_r w_ir theta^r - alpha_k grad f_{i,s}(theta^i)``; one round per iteration."""
    run = _Run(oracle, W, config, theta0, recorder, observer)
    st = run.st
    run.start()
    for k in range(config.iterations):
        g = run.sampled(st.X, run.draw())
        st.X = run.mix(st.X) - config.schedule(k) * g
        st.comms += 1
        st.k = k + 1
        st.V = g
        run.step_done(st.k == config.iterations)
    return run.close()


def _tracking_loop(run: _Run, estimate) -> Trace:
    """Shared gradient-tracking recursion; ``estimate(X)`` returns the new local estimators."""
    st, cfg = run.st, run.cfg
    run.start()
    for k in range(cfg.iterations):
        st.X = run.mix(st.X) - cfg.schedule(k) * st.D
        V_new = estimate(st.X)
        st.D = run.mix(st.D) + (V_new - st.V)
        st.V = V_new
        st.comms += 2
        st.k = k + 1
        run.step_done(st.k == cfg.iterations)
    return run.close()


def run_gt_dgd(oracle, W, config: RunConfig, *, theta0=None, recorder=None, observer=None) -> Trace:
    """Gradient tracking on exact local batch gradients; deterministic."""
    run = _Run(oracle, W, config, theta0, recorder, observer)
    st = run.st
    st.V = run.batch(st.X)
    st.D = st.V.copy()
    return _tracking_loop(run, run.batch)


def run_gt_dsgd(oracle, W, config: RunConfig, *, theta0=None, recorder=None, observer=None) -> Trace:
    """Gradient tracking on one sampled component gradient per node per round."""
    run = _Run(oracle, W, config, theta0, recorder, observer)
    st = run.st
    st.V = run.sampled(st.X, run.draw())
    st.D = st.V.copy()
    return _tracking_loop(run, lambda X: run.sampled(X, run.draw()))


def run_gt_saga(oracle, W, config: RunConfig, *, theta0=None, recorder=None, observer=None) -> Trace:
    """Gradient tracking on local SAGA estimators; tables start full at ``theta_0``."""
    run = _Run(oracle, W, config, theta0, recorder, observer)
    st = run.st
    table = SagaTable(oracle, st.X, config.saga_storage, run.ev)
    st.evals += oracle.sizes
    st.V = table.means(st.X)
    st.D = st.V.copy()

    def estimate(X):
        comps = run.draw()
        g, fresh = table.estimate(X, comps)
        table.replace(comps, fresh)
        st.evals += 1
        return g

    return _tracking_loop(run, estimate)


def run_gt_svrg(oracle, W, config: RunConfig, *, theta0=None, recorder=None, observer=None) -> Trace:
    """Gradient tracking on local SVRG estimators; records once per outer loop.

    Each outer loop costs every node ``m_i + 2T`` component gradients and ``2T``
    communication rounds. Trace rows carry ``k`` = total inner steps.
    """
    run = _Run(oracle, W, config, theta0, recorder, observer)
    run.rec.record_every = config.record_every or 1
    option = svrg_option(config.svrg_option)
    aux = aux_generators(config.seed, oracle.n)
    st, T, carry = run.st, config.T, config.svrg_tracker == "carry"
    run.rec.record(0, st.X, 0, 0)
    D_mixed = None

    def inner_estimate(X, anchor, anchor_grad):
        comps = run.draw()
        st.evals += 2
        return svrg_estimate(run.ev, X, anchor, anchor_grad, comps)

    for outer in range(config.iterations):
        anchor = st.X
        anchor_grad = run.batch(anchor)
        if option == "c":
            picks = np.array([g.integers(0, T) for g in aux])
        if carry:
            if outer == 0:
                st.V = anchor_grad.copy()
                st.D = anchor_grad.copy()
        else:
            V0 = inner_estimate(anchor, anchor, anchor_grad)
            st.D = V0.copy() if outer == 0 else D_mixed + (V0 - st.V)
            st.V = V0
        total = np.zeros_like(anchor)
        chosen = np.empty_like(anchor)
        X = anchor
        for t in range(T):
            if option == "c":
                hit = picks == t
                chosen[hit] = X[hit]
            total = total + X
            st.X = X = run.mix(X) - config.schedule(st.k) * st.D
            st.comms += 1
            if carry or t < T - 1:
                V_new = inner_estimate(X, anchor, anchor_grad)
                st.D = run.mix(st.D) + (V_new - st.V)
                st.V = V_new
                st.comms += 1
            st.k += 1
            if run.observer is not None:
                run.observer(st)
        if not carry:
            D_mixed = run.mix(st.D)
            st.comms += 1
        st.X = {"a": X, "b": total / T, "c": chosen}[option]
        st.outer = outer + 1
        if st.outer % run.rec.record_every == 0 or st.outer == config.iterations:
            run.rec.record(st.k, st.X, st.max_evals, st.comms, st.D, st.V)
    return run.close()


RUNNERS = {
    "dsgd": run_dsgd,
    "gt_dgd": run_gt_dgd,
    "gt_dsgd": run_gt_dsgd,
    "gt_saga": run_gt_saga,
    "gt_svrg": run_gt_svrg,
}


def run(oracle, W, config: RunConfig, **kwargs) -> Trace:
    return RUNNERS[config.algorithm](oracle, W, config, **kwargs)


def communication_cost(algorithm: str, iterations: int, T: int | None = None) -> int:
    """Closed-form per-node communication rounds after ``iterations`` (outer loops for gt_svrg)."""
    if algorithm == "dsgd":
        return iterations
    if algorithm in ("gt_dgd", "gt_dsgd", "gt_saga"):
        return 2 * iterations
    if algorithm == "gt_svrg":
        return 2 * T * iterations
    if algorithm in ("sgd", "saga", "svrg"):
        return 0
    raise ValueError(f"unknown algorithm {algorithm!r}")


def gradient_cost(algorithm: str, iterations: int, sizes, T: int | None = None) -> np.ndarray:
    """Closed-form per-node component-gradient evaluations after ``iterations``."""
    sizes = np.asarray(sizes, dtype=np.int64)
    k = int(iterations)
    return {
        "dsgd": lambda: np.full_like(sizes, k),
        "sgd": lambda: np.full_like(sizes, k),
        "gt_dsgd": lambda: np.full_like(sizes, 1 + k),
        "gt_saga": lambda: sizes + k,
        "saga": lambda: sizes + k,
        "gt_dgd": lambda: sizes * (k + 1),
        "gt_svrg": lambda: k * (sizes + 2 * T),
        "svrg": lambda: k * (sizes + 2 * T),
    }[algorithm]()
