import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gtvr import graphs
from gtvr.graphs import Topology


def test_ring_edges():
    topo = graphs.build_topology("ring", 5)
    assert topo.edges == ((0, 1), (0, 4), (1, 2), (2, 3), (3, 4))
    assert set(topo.degrees()) == {2}


def test_ring_of_two_has_single_edge():
    assert graphs.build_topology("ring", 2).edges == ((0, 1),)


def test_complete_graph_edges():
    topo = graphs.build_topology("complete", 6)
    assert len(topo.edges) == 15
    assert set(topo.degrees()) == {5}


def test_exponential_offsets_and_degree():
    assert graphs.exponential_offsets(16) == [1, 2, 4, 8, 12, 14, 15]
    topo = graphs.build_topology("exponential", 16)
    assert set(topo.degrees()) == {7}
    assert topo.neighbors(0) == [1, 2, 4, 8, 12, 14, 15]


def test_single_node_graph():
    topo = graphs.build_topology("complete", 1)
    np.testing.assert_array_equal(graphs.metropolis_weights(topo), [[1.0]])


def test_unknown_kind_rejected():
    with pytest.raises(graphs.GraphError):
        graphs.build_topology("hypercube", 8)


def test_random_geometric_needs_radius():
    with pytest.raises(graphs.GraphError):
        graphs.build_topology("random_geometric", 8)


def test_random_geometric_disconnected_names_seed():
    with pytest.raises(graphs.DisconnectedGraphError, match="seed=3"):
        graphs.build_topology("random_geometric", 50, {"radius": 0.01}, seed=3)


def test_random_geometric_is_seeded():
    a = graphs.build_topology("random_geometric", 30, {"radius": 0.4}, seed=11)
    b = graphs.build_topology("random_geometric", 30, {"radius": 0.4}, seed=11)
    assert a.edges == b.edges
    np.testing.assert_array_equal(a.positions, b.positions)


def test_two_node_metropolis():
    W = graphs.metropolis_weights(graphs.build_topology("ring", 2))
    np.testing.assert_array_equal(W, [[0.5, 0.5], [0.5, 0.5]])


def test_star_metropolis_hand_values():
    # hub degree 3, leaves degree 1: edge weight 1/(1+3)
    star = Topology(4, ((0, 1), (0, 2), (0, 3)), "star")
    W = graphs.metropolis_weights(star)
    expected = np.array([
        [0.25, 0.25, 0.25, 0.25],
        [0.25, 0.75, 0.0, 0.0],
        [0.25, 0.0, 0.75, 0.0],
        [0.25, 0.0, 0.0, 0.75],
    ])
    np.testing.assert_allclose(W, expected, atol=1e-15)


def test_lazy_metropolis_is_half_identity_plus_half_w():
    topo = graphs.build_topology("exponential", 16)
    W = graphs.metropolis_weights(topo)
    np.testing.assert_allclose(graphs.metropolis_weights(topo, lazy=True), 0.5 * (np.eye(16) + W), atol=1e-15)


def test_complete_graph_mixes_in_one_step():
    W = graphs.metropolis_weights(graphs.build_topology("complete", 8))
    np.testing.assert_allclose(W, np.full((8, 8), 1 / 8), atol=1e-15)
    assert graphs.spectral_gap(W).lam < 1e-12


# circulant spectra computed independently with an FFT of the first row
def test_ring8_lambda_matches_circulant_spectrum():
    lam = graphs.spectral_gap(graphs.metropolis_weights(graphs.build_topology("ring", 8))).lam
    assert lam == pytest.approx(0.804737854124365, abs=1e-12)


def test_exponential16_lambda_values():
    topo = graphs.build_topology("exponential", 16)
    assert graphs.spectral_gap(graphs.metropolis_weights(topo)).lam == pytest.approx(0.5, abs=1e-12)
    assert graphs.spectral_gap(graphs.metropolis_weights(topo, lazy=True)).lam == pytest.approx(0.75, abs=1e-12)


def test_non_mixing_matrix_rejected():
    with pytest.raises(graphs.NonMixingError):
        graphs.spectral_gap(np.eye(3))


def test_disconnected_topology_rejected_by_weights():
    with pytest.raises(graphs.DisconnectedGraphError):
        graphs.metropolis_weights(Topology(4, ((0, 1), (2, 3)), "custom"))


def test_weights_roundtrip(tmp_path):
    topo = graphs.build_topology("random_geometric", 20, {"radius": 0.5}, seed=2)
    W = graphs.metropolis_weights(topo)
    graphs.write_weights(tmp_path / "w.txt", topo, W)
    header, W2 = graphs.read_weights(tmp_path / "w.txt")
    assert header["n"] == "20" and header["kind"] == "random_geometric" and header["seed"] == "2"
    np.testing.assert_array_equal(W, W2)


def test_violation_report_flags_bad_matrix():
    topo = graphs.build_topology("ring", 4)
    bad = graphs.metropolis_weights(topo)
    bad[0, 2] = 0.1
    problems = graphs.weight_matrix_violations(bad, topo)
    assert "rows do not sum to one" in problems
    assert "not symmetric" in problems
    assert "sparsity pattern differs from topology" in problems


@given(n=st.integers(2, 30), radius=st.floats(0.2, 1.5), seed=st.integers(0, 10_000), lazy=st.booleans())
def test_metropolis_invariants_on_random_graphs(n, radius, seed, lazy):
    try:
        topo = graphs.build_topology("random_geometric", n, {"radius": radius}, seed)
    except graphs.DisconnectedGraphError:
        assume(False)
    W = graphs.metropolis_weights(topo, lazy=lazy)
    assert graphs.weight_matrix_violations(W, topo, tol=1e-12) == []
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
    assert graphs.spectral_gap(W).lam < 1.0
