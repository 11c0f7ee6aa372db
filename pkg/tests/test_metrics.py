import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtvr import metrics, objectives


def test_gap_and_mse_vanish_at_minimizer(small_quadratic):
    theta_star = objectives.reference_solution(small_quadratic)
    X = np.tile(theta_star, (4, 1))
    F_star = small_quadratic.global_value(theta_star)
    assert metrics.optimality_gap(small_quadratic, X, F_star) == pytest.approx(0.0, abs=1e-15)
    assert metrics.mse_to_opt(X, theta_star) == 0.0
    assert metrics.consensus_error(X) == 0.0


def test_symmetric_spread_around_minimizer():
    e = np.array([1.0, 0.0])
    X = np.array([e, -e])
    assert metrics.mse_to_opt(X, np.zeros(2)) == 1.0
    assert metrics.consensus_error(X) == 1.0


def test_gap_sandwich(small_quadratic):
    # mu/2 |x - x*|^2 <= F(x) - F* <= L/2 |x - x*|^2 at the average iterate
    o = small_quadratic
    theta_star = objectives.reference_solution(o)
    H = o.hessian
    eig = np.linalg.eigvalsh(H)
    F_star = o.global_value(theta_star)
    rng = np.random.default_rng(0)
    for _ in range(50):
        X = theta_star + rng.standard_normal((4, o.dim))
        d = X.mean(axis=0) - theta_star
        gap = metrics.optimality_gap(o, X, F_star)
        assert eig[0] / 2 * d @ d - 1e-12 <= gap <= eig[-1] / 2 * d @ d + 1e-12


def test_tracking_residual():
    D = np.array([[1.0, 2.0], [3.0, 0.0]])
    assert metrics.tracking_residual(D, D[::-1]) == 0.0
    assert metrics.tracking_residual(D, D - 1.0) == pytest.approx(np.sqrt(2))


def test_accuracy_on_separable_data():
    feats = np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 0.5], [-3.0, 0.0]])
    labels = np.array([1, 1, -1, -1])
    assert metrics.test_accuracy(np.array([1.0, 0.0, 0.0]), feats, labels) == 1.0
    assert metrics.test_accuracy(np.array([-1.0, 0.0, 0.0]), feats, labels) == 0.0


def test_accuracy_zero_score_counts_as_positive():
    feats = np.ones((4, 2))
    assert metrics.test_accuracy(np.zeros(3), feats, np.array([1, -1, 1, -1])) == 0.5
    assert metrics.test_accuracy(np.zeros(3), feats, np.ones(4)) == 1.0


def test_accuracy_empty_set():
    with pytest.raises(ValueError):
        metrics.test_accuracy(np.zeros(3), np.zeros((0, 2)), np.zeros(0))


@given(seed=st.integers(0, 2**31), m=st.integers(1, 30))
def test_accuracy_matches_loop(seed, m):
    rng = np.random.default_rng(seed)
    feats = rng.integers(-2, 3, (m, 3)).astype(float)
    labels = rng.choice([-1, 1], m)
    theta = rng.integers(-2, 3, 4).astype(float)
    hits = 0
    for x, y in zip(feats, labels):
        s = sum(theta[j] * x[j] for j in range(3)) + theta[3]
        hits += (1 if s >= 0 else -1) == y
    assert metrics.test_accuracy(theta, feats, labels) == hits / m


def test_fit_recovers_geometric_rate():
    fit = metrics.fit_rate(0.9 ** np.arange(50))
    assert fit.rate == pytest.approx(0.9, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0)


def test_fit_of_constant_is_flat():
    fit = metrics.fit_rate(np.full(20, 3.0))
    assert fit.slope == pytest.approx(0.0, abs=1e-14) and fit.r_squared == 1.0


def test_fit_loglog_power_law_and_window():
    ks = np.arange(1, 1001, dtype=float)
    fit = metrics.fit_rate(5.0 / ks, ks, window=(10, 1000), loglog=True)
    assert fit.slope == pytest.approx(-1.0, rel=1e-12) and fit.points == 991


def test_fit_stops_at_first_nonpositive_value():
    vals = np.array([1.0, 0.5, 0.25, 0.0, 7.0])
    assert metrics.fit_rate(vals).points == 3
    with pytest.raises(ValueError):
        metrics.fit_rate(np.array([1.0, 0.0]))


def test_plateau_detects_flat_tail():
    vals = np.concatenate([0.5 ** np.arange(30), np.full(270, 2.0 ** -30)])
    p = metrics.plateau(vals)
    assert p.flat and p.level == pytest.approx(2.0 ** -30)
    assert not metrics.plateau(0.9 ** np.arange(300)).flat


def test_recorder_epochs_and_metric_kind(small_quadratic):
    o = small_quadratic
    rec = metrics.MetricRecorder(o, record_every=3)
    assert [k for k in range(10) if rec.due(k)] == [0, 3, 6, 9]
    r = rec.record(6, np.zeros((4, o.dim)), evals=10, comms=12)
    assert r.epoch == 2.0  # N/n = 5 evaluations per epoch
    assert rec.trace.gap_metric == "grad_norm"
    assert r.optimality_gap == pytest.approx(np.linalg.norm(o.global_gradient(np.zeros(o.dim))))
    assert r.mse is None


def _sample_trace():
    t = metrics.Trace(gap_metric="optimality_gap", algorithm="gt_saga")
    t.append(metrics.TraceRecord(0, 0.0, 0, 0, 0.5, 0.1, 0.0, None, None))
    t.append(metrics.TraceRecord(4, 1.25, 5, 8, 1 / 3, 1e-300, 2.5e-17, 0.0, 0.75))
    return t


def test_csv_header_and_roundtrip(tmp_path):
    t = _sample_trace()
    text = t.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# sign(0)=+1 gap_metric=optimality_gap algorithm=gt_saga"
    assert lines[1] == ",".join(metrics.COLUMNS)
    t.write_csv(tmp_path / "trace.csv")
    back = metrics.Trace.read_csv(tmp_path / "trace.csv")
    assert back.records == t.records
    assert back.gap_metric == t.gap_metric and back.algorithm == t.algorithm
    assert back.to_csv() == text


def test_unknown_column():
    with pytest.raises(KeyError):
        _sample_trace().column("loss")


@given(vals=st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=5))
def test_csv_floats_roundtrip_exactly(vals):
    t = metrics.Trace()
    for i, v in enumerate(vals):
        t.append(metrics.TraceRecord(i, v, i, i, v, v, v, v, v))
    back = metrics.Trace.from_csv(t.to_csv())
    assert back.records == t.records
