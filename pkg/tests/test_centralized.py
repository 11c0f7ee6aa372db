import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtvr import centralized as cz
from gtvr import objectives
from gtvr.metrics import MetricRecorder


def _half_norm_squared(p=2):
    return objectives.QuadraticProblem(np.eye(p)[None], np.zeros((1, p)), [1])


def test_step_schedule_values():
    assert cz.StepSchedule("constant", 0.3)(17) == 0.3
    assert cz.StepSchedule("harmonic", 2.0, offset=3.0)(5) == 0.25
    with pytest.raises(ValueError):
        cz.StepSchedule("cosine", 0.1)
    with pytest.raises(ValueError):
        cz.StepSchedule("constant", 0.0)


def test_sgd_single_component_unit_step_solves_in_one_step():
    seen = []
    cz.run_sgd(_half_norm_squared(), cz.StepSchedule("constant", 1.0), 1, seed=0, theta0=[3.0, -1.0],
               observer=lambda s: seen.append(s.X.copy()))
    np.testing.assert_array_equal(seen[0], [[0.0, 0.0]])


def test_single_component_runs_match_gradient_descent(small_quadratic):
    # one component: every stochastic estimator is the exact gradient
    o = objectives.QuadraticProblem(small_quadratic.A[:1], small_quadratic.c[:1], [1])
    alpha, K = 0.1, 30
    theta = np.zeros(o.dim)
    gd = []
    for _ in range(K):
        theta = theta - alpha * o.global_gradient(theta)
        gd.append(theta.copy())
    for run in (
        lambda obs: cz.run_sgd(o, cz.StepSchedule("constant", alpha), K, 0, observer=obs),
        lambda obs: cz.run_saga(o, alpha, K, 0, observer=obs),
        lambda obs: cz.run_svrg(o, alpha, 5, K // 5, "a", 0, observer=obs),
    ):
        seen = []
        run(lambda s: seen.append(s.X[0].copy()))
        np.testing.assert_allclose(np.array(seen), np.array(gd), rtol=1e-12, atol=1e-14)


def test_saga_estimator_is_unbiased(small_quadratic):
    o = small_quadratic.pooled()
    rng = np.random.default_rng(0)
    table = cz.SagaTable(o, rng.standard_normal((1, o.dim)))
    for s in rng.integers(0, o.num_components, 15):
        _, fresh = table.estimate(rng.standard_normal((1, o.dim)), [s])
        table.replace([s], fresh)
    X = rng.standard_normal((1, o.dim))
    mean = np.mean([table.estimate(X, [s])[0][0] for s in range(o.num_components)], axis=0)
    np.testing.assert_allclose(mean, o.global_gradient(X[0]), atol=1e-12)


def test_saga_table_saturates(small_quadratic):
    o = small_quadratic
    rng = np.random.default_rng(1)
    table = cz.SagaTable(o, rng.standard_normal((o.n, o.dim)))
    X = rng.standard_normal((o.n, o.dim))
    for j in range(5):
        comps = o.starts + j
        _, fresh = table.estimate(X, comps)
        table.replace(comps, fresh)
    np.testing.assert_allclose(table.means(X), o.batch_gradients(X), atol=1e-12)
    # with every entry current, the estimator equals the local gradient
    g, _ = table.estimate(X, o.starts + 2)
    np.testing.assert_allclose(g, o.batch_gradients(X), atol=1e-12)


def test_saga_running_average_drift(small_quadratic):
    o = small_quadratic
    rng = np.random.default_rng(2)
    table = cz.SagaTable(o, np.zeros((o.n, o.dim)), resync_every=10**9)
    for _ in range(100_000):
        comps = o.starts + rng.integers(0, 5, o.n)
        fresh = rng.standard_normal((o.n, o.dim))
        table.replace(comps, fresh)
    assert table.drift() < 1e-10


def test_compact_storage_needs_glm(small_quadratic):
    with pytest.raises(ValueError):
        cz.SagaTable(small_quadratic, np.zeros((4, 3)), storage="compact")


def test_compact_table_unbiased(small_logistic):
    o = small_logistic.pooled()
    rng = np.random.default_rng(3)
    table = cz.SagaTable(o, 0.3 * rng.standard_normal((1, o.dim)), storage="compact")
    X = 0.3 * rng.standard_normal((1, o.dim))
    mean = np.mean([table.estimate(X, [s])[0][0] for s in range(o.num_components)], axis=0)
    np.testing.assert_allclose(mean, o.global_gradient(X[0]), atol=1e-12)


def test_saga_converges_to_machine_precision(small_logistic):
    o = small_logistic.pooled()
    theta_star = objectives.reference_solution(o)
    L = o.smoothness().L
    rec = MetricRecorder(o, theta_star=theta_star, record_every=o.num_components)
    trace = cz.run_saga(o, 1.0 / (3 * L), 200 * o.num_components, seed=0, recorder=rec)
    assert trace.last.mse < 1e-18


def test_saga_counters(small_quadratic):
    o = small_quadratic.pooled()
    trace = cz.run_saga(o, 0.05, 37, seed=0, record_every=1)
    np.testing.assert_array_equal(trace.column("grad_evals_per_node"), o.num_components + np.arange(38))
    assert trace.column("comm_rounds_per_node").max() == 0


def test_sgd_counters(small_quadratic):
    trace = cz.run_sgd(small_quadratic, cz.StepSchedule("constant", 0.05), 25, seed=0, record_every=5)
    np.testing.assert_array_equal(trace.column("k"), [0, 5, 10, 15, 20, 25])
    np.testing.assert_array_equal(trace.column("grad_evals_per_node"), trace.column("k"))


def test_svrg_counters_and_rows(small_quadratic):
    o = small_quadratic.pooled()
    trace = cz.run_svrg(o, 0.05, 7, 4, "b", seed=0)
    np.testing.assert_array_equal(trace.column("k"), [0, 7, 14, 21, 28])
    np.testing.assert_array_equal(trace.column("grad_evals_per_node"),
                                  np.arange(5) * (o.num_components + 2 * 7))


def test_svrg_first_estimator_is_full_gradient(small_quadratic):
    o = small_quadratic.pooled()
    theta0 = np.arange(o.dim, dtype=float)
    seen = []
    cz.run_svrg(o, 0.01, 3, 1, "a", seed=0, theta0=theta0, observer=lambda s: seen.append(s.V.copy()))
    np.testing.assert_array_equal(seen[0][0], o.global_gradient(theta0))


def test_svrg_rejects_empty_inner_loop(small_quadratic):
    with pytest.raises(ValueError):
        cz.run_svrg(small_quadratic, 0.1, 0, 3, "a", seed=0)
    with pytest.raises(ValueError):
        cz.run_svrg(small_quadratic, 0.1, 3, 3, "z", seed=0)


def test_svrg_outer_loop_contraction(small_quadratic):
    # alpha = 1/(10L), T = 50 kappa bounds the expected contraction by 1/4 + 1/4
    o = small_quadratic.pooled()
    info = o.smoothness()
    theta_star = objectives.reference_solution(o)
    T = int(np.ceil(50 * info.L / info.mu))
    gaps = []
    for seed in range(20):
        rec = MetricRecorder(o, theta_star=theta_star)
        gaps.append(cz.run_svrg(o, 1 / (10 * info.L), T, 4, "b", seed, recorder=rec).column("optimality_gap"))
    mean = np.mean(gaps, axis=0)
    assert np.all(mean[1:] / mean[:-1] <= 0.5)


def test_svrg_options_agree_at_single_inner_step(small_quadratic):
    o = small_quadratic.pooled()
    finals = {opt: cz.run_svrg(o, 0.05, 1, 3, opt, seed=4).last.optimality_gap for opt in "bc"}
    assert finals["b"] == finals["c"]
    assert cz.svrg_option("average") == "b"


@given(seed=st.integers(0, 10_000), k=st.integers(1, 40))
def test_sgd_is_seed_deterministic(seed, k):
    o = objectives.make_quadratic_problem(2, 3, 2, noise=1.0, seed=1)
    a = cz.run_sgd(o, cz.StepSchedule("harmonic", 0.5), k, seed, record_every=1)
    b = cz.run_sgd(o, cz.StepSchedule("harmonic", 0.5), k, seed, record_every=1)
    assert a.to_csv() == b.to_csv()
