import numpy as np
import pytest

from gradtrack.network import (
    STOCHASTIC_TOL,
    ConsensusMatrix,
    Digraph,
    NetworkSequence,
    averaging_matrix,
    complete_digraph,
    connected_geometric_graph,
    directed_ring,
    drop_edges,
    edge_list_text,
    metropolis_weights,
    parse_edge_list_text,
    random_geometric_graph,
    ring_mixing,
    theta_mixing,
    window_contraction,
    window_product,
)
from oracles import (
    averaging_mix_entries,
    geometric_edges_brute,
    metropolis_entries_brute,
    window_product_naive,
)


class TestDigraph:
    def test_rejects_self_loops(self):
        with pytest.raises(ValueError):
            Digraph(3, {(0, 0)})

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Digraph(3, {(0, 3)})

    def test_edge_count_and_symmetry(self):
        g = Digraph(3, {(0, 1), (1, 0), (1, 2)})
        assert g.edge_count == 3
        assert not g.is_symmetric
        assert Digraph(3, {(0, 1), (1, 0)}).is_symmetric

    def test_complete_digraph(self):
        g = complete_digraph(4)
        assert g.edge_count == 12
        assert g.is_symmetric
        assert g.is_connected()

    def test_ring_orientation(self):
        g = directed_ring(4)
        # node i listens to its successor on the cycle
        assert (0, 1) in g.edges and (3, 0) in g.edges
        assert g.edge_count == 4
        assert not g.is_symmetric
        assert g.is_connected()

    def test_disconnected_detection(self):
        g = Digraph(4, {(0, 1), (1, 0), (2, 3), (3, 2)})
        assert not g.is_connected()

    def test_adjacency_matches_edges(self):
        g = Digraph(3, {(0, 1), (2, 0)})
        adj = g.adjacency()
        assert adj[0, 1] and adj[2, 0]
        assert adj.sum() == 2


class TestConsensusMatrix:
    def test_rejects_row_sum_violation(self):
        g = complete_digraph(2)
        with pytest.raises(ValueError):
            ConsensusMatrix(np.array([[0.6, 0.5], [0.4, 0.5]]), g)

    def test_rejects_off_graph_support(self):
        g = Digraph(3, {(0, 1), (1, 0)})
        w = np.array([[0.5, 0.5, 0.0], [0.5, 0.25, 0.25], [0.0, 0.25, 0.75]])
        with pytest.raises(ValueError):
            ConsensusMatrix(w, g)

    def test_rejects_negative_entries(self):
        g = complete_digraph(2)
        with pytest.raises(ValueError):
            ConsensusMatrix(np.array([[1.2, -0.2], [-0.2, 1.2]]), g)

    def test_entries_are_read_only(self):
        w = theta_mixing(3, 0.5)
        with pytest.raises(ValueError):
            w.entries[0, 0] = 2.0


def test_metropolis_three_node_path():
    # hand-evaluated: degrees 1, 2, 1; shared weight 1/(1+2) = 1/3
    g = Digraph(3, {(0, 1), (1, 0), (1, 2), (2, 1)})
    w = metropolis_weights(g)
    expected = np.array(
        [
            [2.0 / 3.0, 1.0 / 3.0, 0.0],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            [0.0, 1.0 / 3.0, 2.0 / 3.0],
        ]
    )
    np.testing.assert_allclose(w.entries, expected, atol=1e-15)


def test_metropolis_matches_bruteforce_on_random_graph(rng):
    g, _ = connected_geometric_graph(12, 0.5, seed=3)
    w = metropolis_weights(g)
    oracle = metropolis_entries_brute(12, set(g.undirected_pairs()))
    np.testing.assert_allclose(w.entries, oracle, atol=1e-14)
    assert np.abs(w.entries.sum(axis=0) - 1.0).max() <= STOCHASTIC_TOL


def test_theta_mixing_two_nodes():
    w = theta_mixing(2, 0.5)
    np.testing.assert_allclose(w.entries, [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)


def test_theta_mixing_matches_formula():
    w = theta_mixing(5, 0.37)
    np.testing.assert_allclose(w.entries, averaging_mix_entries(5, 0.37), atol=1e-15)


def test_theta_one_is_full_averaging():
    w = theta_mixing(4, 1.0)
    np.testing.assert_allclose(w.entries, averaging_matrix(4), atol=1e-15)


def test_ring_mixing_is_doubly_stochastic_on_ring():
    w = ring_mixing(5, 0.4)
    assert np.abs(w.entries.sum(axis=0) - 1.0).max() <= STOCHASTIC_TOL
    assert np.abs(w.entries.sum(axis=1) - 1.0).max() <= STOCHASTIC_TOL
    assert w.entries[0, 1] == pytest.approx(0.4)
    assert w.entries[0, 2] == 0.0


class TestGeometricGraph:
    def test_edges_match_bruteforce(self):
        rng = np.random.default_rng(5)
        positions = rng.random((20, 2))
        g = random_geometric_graph(20, 0.3, np.random.default_rng(5))
        assert set(g.undirected_pairs()) == geometric_edges_brute(positions, 0.3)

    def test_connected_generator_is_replayable(self):
        g1, a1 = connected_geometric_graph(25, np.sqrt(np.log(25) / 25), seed=0)
        g2, a2 = connected_geometric_graph(25, np.sqrt(np.log(25) / 25), seed=0)
        assert g1 == g2 and a1 == a2
        assert g1.is_connected()

    def test_impossible_radius_exhausts_attempts(self):
        with pytest.raises(RuntimeError):
            connected_geometric_graph(30, 1e-6, seed=0, max_attempts=5)


class TestDropout:
    def test_zero_probability_keeps_graph(self, rng):
        g = complete_digraph(6)
        assert drop_edges(g, 0.0, rng) == g

    def test_drop_is_symmetric(self, rng):
        g = complete_digraph(8)
        dropped = drop_edges(g, 0.5, rng)
        assert dropped.is_symmetric

    def test_keep_rate_close_to_three_quarters(self):
        g = complete_digraph(40)
        total = g.edge_count / 2
        kept = 0
        draws = 200
        rng = np.random.default_rng(11)
        for _ in range(draws):
            kept += drop_edges(g, 0.25, rng).edge_count / 2
        rate = kept / (draws * total)
        assert rate == pytest.approx(0.75, abs=0.02)


class TestNetworkSequence:
    def test_dropout_stream_replayable(self):
        g, _ = connected_geometric_graph(10, 0.5, seed=2)
        s1 = NetworkSequence.geometric_dropout(g, 0.25, seed=9)
        s2 = NetworkSequence.geometric_dropout(g, 0.25, seed=9)
        assert s1.checksum() == s2.checksum()
        np.testing.assert_array_equal(s1.matrix_at(7).entries, s2.matrix_at(7).entries)

    def test_dropout_snapshot_equals_validated_construction(self):
        # the sequence factory inlines drop_edges + metropolis_weights; the
        # result must stay bitwise identical to the public two-step path
        g, _ = connected_geometric_graph(12, 0.5, seed=4)
        seq = NetworkSequence.geometric_dropout(g, 0.3, seed=17)
        for k in (0, 3, 11):
            rng = np.random.default_rng([17, k, 101])
            slow = metropolis_weights(drop_edges(g, 0.3, rng))
            fast = seq.matrix_at(k)
            np.testing.assert_array_equal(fast.entries, slow.entries)
            assert fast.graph.edges == slow.graph.edges
            assert fast.graph.is_symmetric

    def test_different_seeds_differ(self):
        g, _ = connected_geometric_graph(10, 0.5, seed=2)
        s1 = NetworkSequence.geometric_dropout(g, 0.25, seed=9)
        s2 = NetworkSequence.geometric_dropout(g, 0.25, seed=10)
        assert s1.checksum() != s2.checksum()

    def test_recorded_sequence_bounds(self):
        seq = NetworkSequence.recorded([theta_mixing(3, 0.5)])
        seq.matrix_at(0)
        with pytest.raises(IndexError):
            seq.matrix_at(1)

    def test_negative_index_rejected(self):
        seq = NetworkSequence.mixing(3, 0.5)
        with pytest.raises(ValueError):
            seq.matrix_at(-1)

    def test_mixing_from_sequence(self):
        seq = NetworkSequence.mixing_from_sequence(3, [0.2, 0.9])
        np.testing.assert_allclose(
            seq.matrix_at(1).entries, averaging_mix_entries(3, 0.9), atol=1e-15
        )


class TestWindows:
    def test_zero_window_is_identity(self):
        seq = NetworkSequence.mixing(4, 0.5)
        np.testing.assert_array_equal(window_product(seq, 3, 0), np.eye(4))

    def test_product_matches_naive_order(self):
        g, _ = connected_geometric_graph(6, 0.6, seed=1)
        seq = NetworkSequence.geometric_dropout(g, 0.3, seed=4)
        mats = [seq.matrix_at(k).entries for k in range(6)]
        got = window_product(seq, 5, 3)
        np.testing.assert_allclose(got, window_product_naive(mats, 5, 3), atol=1e-14)

    def test_window_before_start_rejected(self):
        seq = NetworkSequence.mixing(4, 0.5)
        with pytest.raises(ValueError):
            window_product(seq, 1, 3)

    def test_products_stay_doubly_stochastic(self):
        g, _ = connected_geometric_graph(8, 0.6, seed=13)
        seq = NetworkSequence.geometric_dropout(g, 0.25, seed=2)
        for k in (2, 5, 9):
            prod = window_product(seq, k, 3)
            np.testing.assert_allclose(prod.sum(axis=1), 1.0, atol=1e-12)
            np.testing.assert_allclose(prod.sum(axis=0), 1.0, atol=1e-12)
            assert prod.min() >= 0.0

    def test_contraction_bounds_sampled_vectors(self):
        # nu_k certifies ||J W y|| <= nu_k ||J y|| for every vector, not
        # just the extremal one
        g, _ = connected_geometric_graph(10, 0.55, seed=21)
        seq = NetworkSequence.geometric_dropout(g, 0.25, seed=6)
        m = 3
        wa = window_contraction(seq, horizon=9, m=m)
        j = np.eye(10) - np.full((10, 10), 0.1)
        rng = np.random.default_rng(99)
        for idx, k in enumerate(range(m - 1, 9)):
            prod = window_product(seq, k, m)
            for _ in range(20):
                y = rng.normal(size=10)
                lhs = np.linalg.norm(j @ prod @ y)
                rhs = wa.nus[idx] * np.linalg.norm(j @ y)
                assert lhs <= rhs + 1e-10

    def test_static_mixing_contraction_value(self):
        # centered spectrum of (1-theta) I + theta avg is 1-theta; windows power it
        seq = NetworkSequence.mixing(6, 0.3)
        wa = window_contraction(seq, horizon=5, m=2)
        np.testing.assert_allclose(wa.nus, (1.0 - 0.3) ** 2, atol=1e-12)
        assert wa.satisfies_contraction

    def test_full_averaging_contracts_in_one_step(self):
        seq = NetworkSequence.mixing(5, 1.0)
        wa = window_contraction(seq, horizon=3, m=1)
        assert wa.nu_sup == pytest.approx(0.0, abs=1e-12)

    def test_contraction_via_eigendecomposition(self):
        # symmetric static snapshot: nu equals the second largest |eigenvalue|
        g, _ = connected_geometric_graph(9, 0.55, seed=6)
        w = metropolis_weights(g)
        seq = NetworkSequence.static(w)
        eigs = np.sort(np.abs(np.linalg.eigvalsh(w.entries)))
        wa = window_contraction(seq, horizon=1, m=1)
        assert wa.nu_sup == pytest.approx(eigs[-2], abs=1e-12)

    def test_dropout_window_contracts_jointly(self):
        g, _ = connected_geometric_graph(12, 0.5, seed=8)
        seq = NetworkSequence.geometric_dropout(g, 0.25, seed=3)
        wa = window_contraction(seq, horizon=24, m=3)
        assert wa.satisfies_contraction


def test_edge_list_round_trip():
    g, _ = connected_geometric_graph(7, 0.6, seed=5)
    w = metropolis_weights(g)
    text = edge_list_text(w)
    back = parse_edge_list_text(text, 7)
    np.testing.assert_array_equal(back, w.entries)


def test_edge_list_text_format():
    w = theta_mixing(2, 0.5)
    lines = edge_list_text(w).strip().splitlines()
    assert lines[0].split() == ["0", "0", "0.75"]
    assert len(lines) == 4
