"""Trace records, exact global metrics, rate fits and the trace CSV format."""

from __future__ import annotations

import io
import math
from dataclasses import astuple, dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = ("k", "epoch", "grad_evals_per_node", "comm_rounds_per_node", "optimality_gap",
           "mse", "consensus_error", "tracking_residual", "test_accuracy")
INT_COLUMNS = ("k", "grad_evals_per_node", "comm_rounds_per_node")


@dataclass(frozen=True)
class TraceRecord:
    k: int
    epoch: float
    grad_evals_per_node: int
    comm_rounds_per_node: int
    optimality_gap: float | None = None
    mse: float | None = None
    consensus_error: float | None = None
    tracking_residual: float | None = None
    test_accuracy: float | None = None


@dataclass
class Trace:
    """Ordered metric records of one run.

    ``gap_metric`` is ``"optimality_gap"`` when a reference minimizer was supplied;
    otherwise it is ``"grad_norm"`` and the gap column holds ``|grad F(theta_bar)|``.
    """

    records: list[TraceRecord] = field(default_factory=list)
    gap_metric: str = "optimality_gap"
    algorithm: str = ""

    def __len__(self):
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown trace column {name!r}")
        vals = [getattr(r, name) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    @property
    def last(self) -> TraceRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# sign(0)=+1 gap_metric={self.gap_metric} algorithm={self.algorithm}\n")
        buf.write(",".join(COLUMNS) + "\n")
        for rec in self.records:
            buf.write(",".join(_fmt(v) for v in astuple(rec)) + "\n")
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        meta = {}
        rows = []
        for line in text.splitlines():
            if line.startswith("#"):
                meta.update(tok.split("=", 1) for tok in line[1:].split() if "=" in tok)
            elif line.strip():
                rows.append(line.split(","))
        if not rows or tuple(rows[0]) != COLUMNS:
            raise ValueError("trace CSV header does not match the expected columns")
        trace = cls(gap_metric=meta.get("gap_metric", "optimality_gap"), algorithm=meta.get("algorithm", ""))
        for row in rows[1:]:
            vals = {}
            for name, cell in zip(COLUMNS, row):
                if cell == "":
                    vals[name] = None
                elif name in INT_COLUMNS:
                    vals[name] = int(cell)
                else:
                    vals[name] = float(cell)
            trace.append(TraceRecord(**vals))
        return trace

    @classmethod
    def read_csv(cls, path: str | Path) -> "Trace":
        return cls.from_csv(Path(path).read_text())


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# -- metric formulas ----------------------------------------------------------

def optimality_gap(oracle, X, F_star: float) -> float:
    return oracle.global_value(np.asarray(X).mean(axis=0)) - F_star


def mse_to_opt(X, theta_star) -> float:
    E = np.asarray(X) - theta_star
    return float(np.mean(np.sum(E * E, axis=1)))


def consensus_error(X) -> float:
    X = np.asarray(X)
    E = X - X.mean(axis=0)
    return float(np.mean(np.sum(E * E, axis=1)))


def tracking_residual(D, V) -> float:
    """``|mean(D) - mean(V)|``; zero up to rounding for any gradient-tracking run."""
    return float(np.linalg.norm(np.asarray(D).mean(axis=0) - np.asarray(V).mean(axis=0)))


def test_accuracy(theta, features, labels) -> float:
    """Fraction of samples with ``sign(b.x + c) == y``, taking ``sign(0) = +1``."""
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("test set is empty")
    theta = np.asarray(theta, dtype=float)
    scores = features @ theta[:-1] + theta[-1]
    pred = np.where(scores >= 0, 1, -1)
    return float(np.mean(pred == labels))


class MetricRecorder:
    """Evaluates the trace metrics for a stacked iterate ``X``.

    ``epoch_size`` is ``N/n``; gradient-evaluation counts are divided by it.
    Without ``theta_star`` the gap column holds the gradient norm at the average
    iterate and ``mse`` is left empty.
    """

    def __init__(self, oracle, theta_star=None, test_set=None, record_every: int = 1,
                 epoch_size: float | None = None, algorithm: str = ""):
        self.oracle = oracle
        self.theta_star = None if theta_star is None else np.asarray(theta_star, dtype=float)
        self.F_star = None if theta_star is None else oracle.global_value(self.theta_star)
        self.test_set = test_set
        self.record_every = max(1, int(record_every))
        self.epoch_size = epoch_size
        self.trace = Trace(gap_metric="optimality_gap" if theta_star is not None else "grad_norm",
                           algorithm=algorithm)

    def due(self, k: int) -> bool:
        return k % self.record_every == 0

    def record(self, k: int, X, evals: int, comms: int, D=None, V=None) -> TraceRecord:
        X = np.asarray(X)
        theta_bar = X.mean(axis=0)
        if self.theta_star is not None:
            gap = self.oracle.global_value(theta_bar) - self.F_star
            mse = mse_to_opt(X, self.theta_star)
        else:
            gap = float(np.linalg.norm(self.oracle.global_gradient(theta_bar)))
            mse = None
        acc = None
        if self.test_set is not None:
            acc = test_accuracy(theta_bar, self.test_set.features, self.test_set.labels)
        epoch_size = self.epoch_size or self.oracle.num_components / self.oracle.n
        rec = TraceRecord(
            k=int(k), epoch=evals / epoch_size, grad_evals_per_node=int(evals), comm_rounds_per_node=int(comms),
            optimality_gap=float(gap), mse=mse, consensus_error=consensus_error(X),
            tracking_residual=None if D is None else tracking_residual(D, V), test_accuracy=acc,
        )
        self.trace.append(rec)
        return rec


# -- rate fits -----------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    r_squared: float
    points: int

    @property
    def rate(self) -> float:
        """Per-step contraction factor ``exp(slope)`` for log-linear fits."""
        return math.exp(self.slope)


def fit_rate(values, ks=None, window: tuple[float, float] | None = None, loglog: bool = False) -> RateFit:
    """Least-squares line through ``log(values)`` against ``k`` (or ``log k``).

    ``window = (lo, hi)`` keeps points with ``lo <= k <= hi``. If the metric hits
    zero or goes negative inside the window, only the positive prefix is fitted.
    """
    values = np.asarray(values, dtype=float)
    ks = np.arange(len(values), dtype=float) if ks is None else np.asarray(ks, dtype=float)
    if window is not None:
        keep = (ks >= window[0]) & (ks <= window[1])
        values, ks = values[keep], ks[keep]
    bad = np.flatnonzero(~(values > 0))
    if len(bad):
        values, ks = values[:bad[0]], ks[:bad[0]]
    if len(values) < 2:
        raise ValueError("need at least two positive points to fit a rate")
    x = np.log(ks) if loglog else ks
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if np.ptp(y) == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(float(slope), r2, len(values))


@dataclass(frozen=True)
class Plateau:
    level: float
    flat: bool
    tail_slope: float


def plateau(values, ks=None, fraction: float = 0.1, flat_tol: float = 1e-3) -> Plateau:
    """Mean over the final ``fraction`` of points.

    ``flat`` reports whether a log-linear fit over that tail has slope magnitude
    below ``flat_tol`` per iteration, i.e. whether the decay has stopped.
    """
    values = np.asarray(values, dtype=float)
    ks = np.arange(len(values), dtype=float) if ks is None else np.asarray(ks, dtype=float)
    start = min(len(values) - 2, int(math.floor(len(values) * (1.0 - fraction))))
    tail, tk = values[max(start, 0):], ks[max(start, 0):]
    try:
        slope = fit_rate(tail, tk).slope
    except ValueError:
        slope = 0.0
    return Plateau(float(np.mean(tail)), abs(slope) < flat_tol, slope)
