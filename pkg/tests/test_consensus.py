import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gtvr import consensus, graphs

RING8_LAMBDA = 0.804737854124365  # 1/3 + (2/3) cos(pi/4)


def _weights(kind, n, lazy=False):
    return graphs.metropolis_weights(graphs.build_topology(kind, n), lazy=lazy)


def test_two_nodes_average_in_one_step():
    W = _weights("complete", 2)
    np.testing.assert_array_equal(consensus.mix(W, np.array([[0.0], [2.0]])), [[1.0], [1.0]])


def test_complete_graph_averages_in_one_step():
    W = _weights("complete", 7)
    X = np.random.default_rng(0).standard_normal((7, 3))
    np.testing.assert_allclose(consensus.mix(W, X), np.tile(X.mean(axis=0), (7, 1)), atol=1e-14)


def test_mixing_preserves_the_average():
    W = _weights("exponential", 16)
    rng = np.random.default_rng(1)
    for _ in range(100):
        X = rng.standard_normal((16, 4))
        np.testing.assert_allclose(consensus.mix(W, X).mean(axis=0), X.mean(axis=0), atol=1e-13)


def test_consensual_state_is_fixed():
    X = np.tile([1.5, -2.0, 0.25], (8, 1))
    np.testing.assert_allclose(consensus.mix(_weights("ring", 8), X), X, atol=1e-15)


def test_ring_contraction_rate():
    W = _weights("ring", 8)
    X0 = np.random.default_rng(2).standard_normal((8, 1))
    norms = consensus.run_consensus(W, X0, 100)
    rate = (norms[100] / norms[50]) ** (1 / 50)
    assert abs(rate - RING8_LAMBDA) <= 0.05 * RING8_LAMBDA
    assert np.all(np.diff(norms) <= 1e-15)


def test_dac_tracks_average_exactly():
    W = _weights("ring", 8)
    rng = np.random.default_rng(3)
    r = rng.standard_normal((8, 2))
    d = r.copy()
    for _ in range(1000):
        r_new = r + rng.standard_normal((8, 2))
        d = consensus.dac_step(W, d, r_new, r)
        r = r_new
        np.testing.assert_allclose(d.mean(axis=0), r.mean(axis=0), atol=1e-9)


def test_dac_drift_bound():
    # ||d_k - mean|| <= lam^k ||d_0 - mean|| + max ||delta r|| / (1 - lam)
    W = _weights("ring", 8)
    lam = graphs.spectral_gap(W).lam
    rng = np.random.default_rng(4)
    base = rng.standard_normal((8, 3))
    r = base.copy()
    d = r.copy()
    e0 = consensus.disagreement(d)
    max_step = 0.0
    for k in range(1, 400):
        r_new = base + np.sin(0.01 * k) * rng.standard_normal((8, 3)) * 0.01 + 0.002 * k
        max_step = max(max_step, np.linalg.norm(r_new - r))
        d = consensus.dac_step(W, d, r_new, r)
        r = r_new
        assert consensus.disagreement(d) <= lam**k * e0 + max_step / (1 - lam) + 1e-12


def test_shape_errors():
    W = _weights("ring", 4)
    with pytest.raises(ValueError):
        consensus.mix(W, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        consensus.Mixer(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        consensus.dac_step(W, np.zeros((4, 2)), np.zeros((4, 2)), np.zeros((4, 3)))


def test_sparse_matches_dense():
    W = _weights("exponential", 16, lazy=True)
    X = np.random.default_rng(5).standard_normal((16, 6))
    np.testing.assert_allclose(consensus.mix(W, X), W @ X, rtol=1e-14, atol=1e-14)


@given(n=st.integers(2, 12), kind=st.sampled_from(["ring", "complete", "exponential"]),
       seed=st.integers(0, 2**31), steps=st.integers(1, 30))
def test_mixing_keeps_mean_and_shrinks_disagreement(n, kind, seed, steps):
    W = _weights(kind, n, lazy=True)
    X = np.random.default_rng(seed).standard_normal((n, 3))
    norms = consensus.run_consensus(W, X, steps)
    Y = X
    for _ in range(steps):
        Y = consensus.mix(W, Y)
    np.testing.assert_allclose(Y.mean(axis=0), X.mean(axis=0), atol=1e-12)
    lam = graphs.spectral_gap(W).lam
    assert norms[-1] <= lam**steps * norms[0] + 1e-12
